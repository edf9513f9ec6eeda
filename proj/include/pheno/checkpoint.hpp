#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pheno/model.hpp"

namespace pheno {

// A checkpoint is `<stem>.json` (header) next to `<stem>.bin`, the parameter
// vector as little-endian IEEE-754 doubles. The header's "tensors" table lists
// name, rows, cols and element offset of every tensor in blob order.
struct Checkpoint {
  nlohmann::json header;
  std::vector<double> params;
};

void write_checkpoint(const std::filesystem::path& header_path, nlohmann::json header,
                      std::span<const double> params);
Checkpoint read_checkpoint(const std::filesystem::path& header_path);

nlohmann::json tensor_table(std::span<const TensorInfo> tensors);

// Header fields: kind "recurrent", spec, plus everything in `extra`.
void save_model(const std::filesystem::path& header_path, const RecurrentModel& model,
                const nlohmann::json& extra = nlohmann::json::object());
RecurrentModel load_model(const std::filesystem::path& header_path,
                          nlohmann::json* header = nullptr);

}  // namespace pheno
