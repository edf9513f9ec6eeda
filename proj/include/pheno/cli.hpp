#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace pheno {

inline constexpr std::string_view kVersion = "0.1.0";

inline constexpr std::string_view kSubcommands[] = {"synth", "filter", "engineer", "split", "train",
                                                    "tune",  "fuse",   "eval",     "report"};

// Lowercase hex SHA-256 of a byte string / of a file's contents.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

// Digest of every regular file under `dir`: SHA-256 over sorted
// "<relative path> <file digest>\n" lines.
std::string sha256_tree(const std::filesystem::path& dir);

// Stage provenance as stored under run.json's "stages" map.
struct StageRecord {
  std::string key;
  std::uint64_t seed = 0;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json inputs = nlohmann::json::object();   // relative path -> digest
  nlohmann::json outputs = nlohmann::json::object();  // relative path -> digest
};

nlohmann::json stage_record_to_json(const StageRecord& r);

// Reads run.json under `run_dir`, replaces the entry for `record.key`, and
// writes it back with sorted keys.
void record_stage(const std::filesystem::path& run_dir, const StageRecord& record);

// Runs one subcommand. args[0] is the subcommand name (no program name).
// Returns 0 on success, 1 on a stage failure, 2 on a usage error; failures
// print a one-line JSON object on `err`.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// argv form for main().
int dispatch(int argc, const char* const* argv);

}  // namespace pheno
