#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "pheno/core_data.hpp"
#include "pheno/optim.hpp"

namespace pheno {

enum class FusionScheme { kAverage, kLateLinear, kIntermediate };

std::string_view scheme_name(FusionScheme s);
// "average", "linear" (or "late_linear"), "intermediate".
FusionScheme parse_scheme(std::string_view s);

// "eye,face" -> {kEye, kFace}; order preserved, duplicates rejected.
std::vector<Modality> parse_subset(std::string_view s);
std::string subset_name(std::span<const Modality> subset);

// Frozen base-model outputs for N samples. logits[i] is 2 x N and hidden[i]
// is h_i x N for subset[i]; either list may be empty if the scheme does not
// need it.
struct FusionInput {
  std::vector<Modality> subset;
  std::vector<Eigen::MatrixXd> logits;
  std::vector<Eigen::MatrixXd> hidden;

  std::size_t size() const;
};

// Arithmetic mean of per-modality probabilities.
double fuse_average(std::span<const double> probabilities);
// Softmax of the mean logit vector.
double fuse_average_logits(std::span<const Eigen::Vector2d> logits);

// Fully connected network, ReLU between layers, 2 logits out. Layer l owns
// W_l (out x in) then b_l (out) in the flat parameter vector.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<int> widths);

  static Mlp initialize(std::vector<int> widths, std::uint64_t seed);

  const std::vector<int>& widths() const { return widths_; }
  int input_width() const { return widths_.empty() ? 0 : widths_.front(); }
  std::vector<double>& parameters() { return params_; }
  const std::vector<double>& parameters() const { return params_; }

  // x is input_width x N; returns 2 x N logits.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;
  // Gradient of sum(dlogits .* logits) for the batch x.
  std::vector<double> backward(const Eigen::MatrixXd& x, const Eigen::MatrixXd& dlogits) const;

 private:
  std::vector<int> widths_;
  std::vector<double> params_;
};

struct FusionHead {
  FusionScheme scheme = FusionScheme::kAverage;
  std::vector<Modality> subset;
  bool average_logits = false;  // Average only
  Mlp net;                      // empty for Average
};

struct FusionTrainConfig {
  int batch_size = 32;
  double learning_rate = 5.44e-4;
  double weight_decay = 0.0;
  EarlyStoppingConfig early_stopping;
  int max_epochs = 30;
  std::uint64_t seed = 0;
  std::vector<int> hidden_sizes{256, 32, 64};  // Intermediate only
};

nlohmann::json fusion_config_to_json(const FusionTrainConfig& c);
FusionTrainConfig fusion_config_from_json(const nlohmann::json& j);

struct FusionTrainResult {
  FusionHead head;
  TrainHistory history;
};

FusionHead average_head(std::vector<Modality> subset, bool average_logits = false);

// Input width 2k; class-weighted cross-entropy, Adam, early stopping on val.
FusionTrainResult train_late_linear(const FusionInput& train, std::span<const int> train_labels,
                                    const FusionInput& val, std::span<const int> val_labels,
                                    const FusionTrainConfig& config);
// Input width sum of hidden sizes; throws DimMismatch on a zero hidden size.
FusionTrainResult train_intermediate(const FusionInput& train, std::span<const int> train_labels,
                                     const FusionInput& val, std::span<const int> val_labels,
                                     const FusionTrainConfig& config);

// Probability of label 1 per sample. Throws SchemeMismatch when the input's
// subset or fields do not match the head.
std::vector<double> fuse_predict(const FusionHead& head, const FusionInput& input);

// Concatenated head input (2k x N for LateLinear, sum h_i x N for
// Intermediate).
Eigen::MatrixXd fusion_features(FusionScheme scheme, const FusionInput& input);

void save_fusion_head(const std::filesystem::path& header_path, const FusionHead& head,
                      const nlohmann::json& extra = nlohmann::json::object());
FusionHead load_fusion_head(const std::filesystem::path& header_path);

}  // namespace pheno
