#include "pheno/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include <fmt/format.h>

#include "pheno/core_data.hpp"
#include "pheno/error.hpp"

namespace pheno {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path blob_path(const fs::path& header_path) {
  fs::path p = header_path;
  return p.replace_extension(".bin");
}

std::uint64_t to_little(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  std::uint64_t r = 0;
  for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffu) << (8 * (7 - i));
  return r;
}

}  // namespace

json tensor_table(std::span<const TensorInfo> tensors) {
  json t = json::array();
  for (const auto& info : tensors) {
    t.push_back({{"name", info.name}, {"rows", info.rows}, {"cols", info.cols},
                 {"offset", info.offset}});
  }
  return t;
}

void write_checkpoint(const fs::path& header_path, json header, std::span<const double> params) {
  const fs::path blob = blob_path(header_path);
  header["blob"] = blob.filename().string();
  header["dtype"] = "float64-le";
  header["parameter_count"] = params.size();
  std::string bytes(params.size() * 8, '\0');
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::uint64_t bits = to_little(std::bit_cast<std::uint64_t>(params[i]));
    std::memcpy(bytes.data() + 8 * i, &bits, 8);
  }
  write_text_file(blob, bytes);
  write_text_file(header_path, header.dump(2) + "\n");
}

Checkpoint read_checkpoint(const fs::path& header_path) {
  Checkpoint c;
  try {
    c.header = json::parse(read_text_file(header_path));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParseError,
                fmt::format("{}: bad checkpoint header: {}", header_path.string(), e.what()),
                header_path.string());
  }
  const fs::path blob = header_path.parent_path() / c.header.value("blob", "");
  const std::string bytes = read_text_file(blob);
  const auto count = c.header.value("parameter_count", std::size_t{0});
  if (bytes.size() != count * 8) {
    throw Error(ErrorKind::kDimensionMismatch,
                fmt::format("{}: blob holds {} bytes, header expects {} doubles", blob.string(),
                            bytes.size(), count),
                blob.string(), static_cast<double>(bytes.size()));
  }
  c.params.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, bytes.data() + 8 * i, 8);
    c.params[i] = std::bit_cast<double>(to_little(bits));
  }
  return c;
}

void save_model(const fs::path& header_path, const RecurrentModel& model, const json& extra) {
  json header = extra;
  header["kind"] = "recurrent";
  header["spec"] = model_spec_to_json(model.spec());
  header["tensors"] = tensor_table(model.tensors());
  write_checkpoint(header_path, std::move(header), model.parameters());
}

RecurrentModel load_model(const fs::path& header_path, json* header) {
  Checkpoint c = read_checkpoint(header_path);
  if (c.header.value("kind", "") != "recurrent") {
    throw Error(ErrorKind::kParseError,
                fmt::format("{} is not a recurrent model checkpoint", header_path.string()),
                header_path.string());
  }
  RecurrentModel model(model_spec_from_json(c.header.at("spec")));
  if (c.params.size() != model.parameter_count()) {
    throw Error(ErrorKind::kDimensionMismatch,
                fmt::format("{}: {} parameters, spec needs {}", header_path.string(),
                            c.params.size(), model.parameter_count()),
                header_path.string(), static_cast<double>(c.params.size()));
  }
  model.parameters() = std::move(c.params);
  if (header) *header = std::move(c.header);
  return model;
}

}  // namespace pheno
