#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace pheno {

enum class CellKind { kLstm, kGru, kCnnLstm, kCnnGru };

std::string_view cell_name(CellKind c);
// Accepts "LSTM", "GRU", "CNN+LSTM", "CNN+GRU" (case-insensitive).
CellKind parse_cell(std::string_view s);

struct ModelSpec {
  CellKind cell = CellKind::kLstm;
  int input_dim = 2;
  int hidden_size = 16;
  int num_layers = 1;  // recurrent layers only
  double dropout = 0.0;
  // Causal 1-D convolution in front of the recurrent stack (CNN+* cells).
  int conv_kernel = 5;
  int conv_channels = 0;  // 0 means input_dim

  bool has_conv() const { return cell == CellKind::kCnnLstm || cell == CellKind::kCnnGru; }
  bool is_gru() const { return cell == CellKind::kGru || cell == CellKind::kCnnGru; }
  int gate_count() const { return is_gru() ? 3 : 4; }
  int channels() const { return conv_channels > 0 ? conv_channels : input_dim; }
  // Width of the first recurrent layer's input.
  int recurrent_input_dim() const { return has_conv() ? channels() : input_dim; }

  void validate() const;
  bool operator==(const ModelSpec&) const = default;
};

nlohmann::json model_spec_to_json(const ModelSpec& s);
ModelSpec model_spec_from_json(const nlohmann::json& j);

// One named tensor inside the flat parameter vector, stored column-major.
struct TensorInfo {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::size_t offset = 0;
  std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }
};

// Tensor order: [conv.weight (C x k*d), conv.bias (C)] when a conv front-end
// is present; then per layer l: layer{l}.weight (G*h x (in+h)) acting on the
// stacked [input; previous hidden], layer{l}.bias (G*h); then head.weight
// (2 x h), head.bias (2). LSTM gate rows are i, f, g, o; GRU rows are z, r, n,
// where the n block multiplies [input; r * previous hidden].
std::vector<TensorInfo> tensor_layout(const ModelSpec& spec);
std::size_t parameter_count(const ModelSpec& spec);

// Feature-by-time matrix: column t is frame t.
using Sequence = Eigen::MatrixXd;

class RecurrentModel {
 public:
  // All-zero parameters.
  explicit RecurrentModel(ModelSpec spec);
  // Uniform(-1/sqrt(h), 1/sqrt(h)) for every parameter; same seed, same weights.
  static RecurrentModel initialize(const ModelSpec& spec, std::uint64_t seed);

  const ModelSpec& spec() const { return spec_; }
  const std::vector<TensorInfo>& tensors() const { return layout_; }
  std::vector<double>& parameters() { return params_; }
  const std::vector<double>& parameters() const { return params_; }
  std::size_t parameter_count() const { return params_.size(); }

  Eigen::Map<const Eigen::MatrixXd> tensor(std::size_t index) const;
  Eigen::Map<Eigen::MatrixXd> tensor(std::size_t index);

 private:
  ModelSpec spec_;
  std::vector<TensorInfo> layout_;
  std::vector<double> params_;
};

// Activations recorded by a batched forward pass for backpropagation.
struct ForwardTape {
  int batch = 0;
  int steps = 0;
  std::vector<int> lengths;
  Eigen::MatrixXd active;             // steps x batch, 1 while t < length
  std::vector<Eigen::MatrixXd> input; // per step, d x batch (padded)
  struct Layer {
    std::vector<Eigen::MatrixXd> in;     // per step, layer input (after dropout)
    std::vector<Eigen::MatrixXd> hidden; // steps + 1 entries, [0] = zeros
    std::vector<Eigen::MatrixXd> cell;   // LSTM only, steps + 1 entries
    std::vector<Eigen::MatrixXd> gates;  // per step, activated gates
    std::vector<Eigen::MatrixXd> tanh_cell;  // LSTM only
    std::vector<Eigen::MatrixXd> drop;   // per step dropout scale on `in`, empty if none
  };
  std::vector<Layer> layers;
};

struct BatchOutput {
  Eigen::MatrixXd logits;  // 2 x batch
  Eigen::MatrixXd hidden;  // h x batch, top layer at each sequence's last frame
};

// Pads to the longest sequence; padded steps leave the state untouched, so each
// column equals the result of running that sequence alone. Dropout between
// stacked layers is sampled from `rng` only when `training` is true.
BatchOutput forward_batch(const RecurrentModel& model, std::span<const Sequence* const> batch,
                          bool training, std::mt19937_64* rng = nullptr,
                          ForwardTape* tape = nullptr);

// Gradient of sum_b <dlogits[:, b], logits[:, b]> with respect to all
// parameters, in the flat layout.
std::vector<double> backward(const RecurrentModel& model, const ForwardTape& tape,
                             const Eigen::MatrixXd& dlogits);

struct ForwardResult {
  Eigen::Vector2d logits;
  Eigen::VectorXd hidden;
};

ForwardResult forward(const RecurrentModel& model, const Sequence& sequence, bool training = false,
                      std::mt19937_64* rng = nullptr);

}  // namespace pheno
