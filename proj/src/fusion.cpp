#include "pheno/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "pheno/checkpoint.hpp"
#include "pheno/error.hpp"
#include "pheno/evaluation.hpp"
#include "pheno/losses.hpp"

namespace pheno {

using nlohmann::json;

std::string_view scheme_name(FusionScheme s) {
  switch (s) {
    case FusionScheme::kAverage: return "average";
    case FusionScheme::kLateLinear: return "linear";
    case FusionScheme::kIntermediate: return "intermediate";
  }
  return "average";
}

FusionScheme parse_scheme(std::string_view s) {
  if (s == "average") return FusionScheme::kAverage;
  if (s == "linear" || s == "late_linear") return FusionScheme::kLateLinear;
  if (s == "intermediate") return FusionScheme::kIntermediate;
  throw Error(ErrorKind::kConfigError, fmt::format("unknown fusion scheme '{}'", s),
              std::string(s));
}

std::vector<Modality> parse_subset(std::string_view s) {
  std::vector<Modality> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t comma = std::min(s.find(',', start), s.size());
    const std::string_view part = s.substr(start, comma - start);
    if (!part.empty()) {
      const Modality m = parse_modality(part);
      if (std::find(out.begin(), out.end(), m) != out.end()) {
        throw Error(ErrorKind::kConfigError, fmt::format("modality '{}' listed twice", part),
                    std::string(part));
      }
      out.push_back(m);
    }
    start = comma + 1;
  }
  if (out.empty()) throw Error(ErrorKind::kEmptySubset, "modality subset is empty");
  return out;
}

std::string subset_name(std::span<const Modality> subset) {
  std::string out;
  for (Modality m : subset) {
    if (!out.empty()) out += ',';
    out += modality_name(m);
  }
  return out;
}

std::size_t FusionInput::size() const {
  if (!logits.empty()) return static_cast<std::size_t>(logits.front().cols());
  if (!hidden.empty()) return static_cast<std::size_t>(hidden.front().cols());
  return 0;
}

double fuse_average(std::span<const double> probabilities) {
  if (probabilities.empty()) throw Error(ErrorKind::kEmptySubset, "no probabilities to average");
  double sum = 0;
  for (double p : probabilities) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw Error(ErrorKind::kRangeViolation, "probability outside [0, 1]", "probability", p);
    }
    sum += p;
  }
  return sum / static_cast<double>(probabilities.size());
}

double fuse_average_logits(std::span<const Eigen::Vector2d> logits) {
  if (logits.empty()) throw Error(ErrorKind::kEmptySubset, "no logits to average");
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& z : logits) mean += z;
  mean /= static_cast<double>(logits.size());
  return positive_probability(mean);
}

Mlp::Mlp(std::vector<int> widths) : widths_(std::move(widths)) {
  if (widths_.size() < 2) throw Error(ErrorKind::kDimMismatch, "an MLP needs at least two widths");
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    if (widths_[l] < 1 || widths_[l + 1] < 1) {
      throw Error(ErrorKind::kDimMismatch, fmt::format("MLP layer {} has width zero", l),
                  "width", static_cast<double>(std::min(widths_[l], widths_[l + 1])));
    }
    n += static_cast<std::size_t>(widths_[l + 1]) * (widths_[l] + 1);
  }
  params_.assign(n, 0.0);
}

Mlp Mlp::initialize(std::vector<int> widths, std::uint64_t seed) {
  Mlp net(std::move(widths));
  std::mt19937_64 rng(seed);
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < net.widths_.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(net.widths_[l]));
    std::uniform_real_distribution<double> u(-bound, bound);
    const std::size_t n = static_cast<std::size_t>(net.widths_[l + 1]) * (net.widths_[l] + 1);
    for (std::size_t i = 0; i < n; ++i) net.params_[offset + i] = u(rng);
    offset += n;
  }
  return net;
}

namespace {

using ConstMap = Eigen::Map<const Eigen::MatrixXd>;

struct LayerView {
  ConstMap w;
  Eigen::Map<const Eigen::VectorXd> b;
};

LayerView layer_view(const std::vector<int>& widths, const std::vector<double>& params,
                     std::size_t l, std::size_t offset) {
  const int in = widths[l];
  const int out = widths[l + 1];
  return {ConstMap(params.data() + offset, out, in),
          Eigen::Map<const Eigen::VectorXd>(params.data() + offset + out * in, out)};
}

}  // namespace

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x) const {
  if (x.rows() != input_width()) {
    throw Error(ErrorKind::kDimMismatch,
                fmt::format("MLP expects {} inputs, got {}", input_width(), x.rows()), "input",
                static_cast<double>(x.rows()));
  }
  Eigen::MatrixXd a = x;
  std::size_t offset = 0;
  const std::size_t layers = widths_.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const LayerView v = layer_view(widths_, params_, l, offset);
    Eigen::MatrixXd z = v.w * a;
    z.colwise() += v.b;
    a = l + 1 < layers ? Eigen::MatrixXd(z.cwiseMax(0.0)) : z;
    offset += static_cast<std::size_t>(widths_[l + 1]) * (widths_[l] + 1);
  }
  return a;
}

std::vector<double> Mlp::backward(const Eigen::MatrixXd& x, const Eigen::MatrixXd& dlogits) const {
  const std::size_t layers = widths_.size() - 1;
  std::vector<Eigen::MatrixXd> acts{x};
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    offsets.push_back(offset);
    const LayerView v = layer_view(widths_, params_, l, offset);
    Eigen::MatrixXd z = v.w * acts.back();
    z.colwise() += v.b;
    acts.push_back(l + 1 < layers ? Eigen::MatrixXd(z.cwiseMax(0.0)) : z);
    offset += static_cast<std::size_t>(widths_[l + 1]) * (widths_[l] + 1);
  }
  std::vector<double> grad(params_.size(), 0.0);
  Eigen::MatrixXd delta = dlogits;
  for (std::size_t l = layers; l-- > 0;) {
    const int in = widths_[l];
    const int out = widths_[l + 1];
    Eigen::Map<Eigen::MatrixXd> gw(grad.data() + offsets[l], out, in);
    Eigen::Map<Eigen::VectorXd> gb(grad.data() + offsets[l] + out * in, out);
    gw = delta * acts[l].transpose();
    gb = delta.rowwise().sum();
    if (l == 0) break;
    const LayerView v = layer_view(widths_, params_, l, offsets[l]);
    delta = (v.w.transpose() * delta).cwiseProduct(
        (acts[l].array() > 0.0).cast<double>().matrix());
  }
  return grad;
}

json fusion_config_to_json(const FusionTrainConfig& c) {
  return json{{"batch_size", c.batch_size},         {"learning_rate", c.learning_rate},
              {"weight_decay", c.weight_decay},     {"patience", c.early_stopping.patience},
              {"min_delta", c.early_stopping.min_delta}, {"max_epochs", c.max_epochs},
              {"seed", c.seed},                     {"hidden_sizes", c.hidden_sizes}};
}

FusionTrainConfig fusion_config_from_json(const json& j) {
  FusionTrainConfig c;
  try {
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.early_stopping.patience = j.value("patience", c.early_stopping.patience);
    c.early_stopping.min_delta = j.value("min_delta", c.early_stopping.min_delta);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.seed = j.value("seed", c.seed);
    c.hidden_sizes = j.value("hidden_sizes", c.hidden_sizes);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kConfigError, fmt::format("bad fusion config: {}", e.what()));
  }
  return c;
}

FusionHead average_head(std::vector<Modality> subset, bool average_logits) {
  if (subset.empty()) throw Error(ErrorKind::kEmptySubset, "modality subset is empty");
  FusionHead h;
  h.scheme = FusionScheme::kAverage;
  h.subset = std::move(subset);
  h.average_logits = average_logits;
  return h;
}

Eigen::MatrixXd fusion_features(FusionScheme scheme, const FusionInput& input) {
  if (input.subset.empty()) throw Error(ErrorKind::kEmptySubset, "modality subset is empty");
  const auto& parts = scheme == FusionScheme::kIntermediate ? input.hidden : input.logits;
  if (parts.size() != input.subset.size()) {
    throw Error(ErrorKind::kSchemeMismatch,
                fmt::format("{} fusion needs {} per modality", scheme_name(scheme),
                            scheme == FusionScheme::kIntermediate ? "hidden states" : "logits"));
  }
  const Eigen::Index n = parts.front().cols();
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != n) throw Error(ErrorKind::kDimMismatch, "modalities disagree on sample count");
    rows += p.rows();
  }
  Eigen::MatrixXd x(rows, n);
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    x.middleRows(r, p.rows()) = p;
    r += p.rows();
  }
  return x;
}

namespace {

FusionTrainResult train_head(FusionScheme scheme, std::vector<int> widths,
                             const FusionInput& train, std::span<const int> train_labels,
                             const FusionInput& val, std::span<const int> val_labels,
                             const FusionTrainConfig& config) {
  if (train.subset.empty()) throw Error(ErrorKind::kEmptySubset, "modality subset is empty");
  if (train.subset != val.subset) {
    throw Error(ErrorKind::kSchemeMismatch, "train and val inputs use different subsets");
  }
  const Eigen::MatrixXd x = fusion_features(scheme, train);
  const Eigen::MatrixXd xv = fusion_features(scheme, val);
  if (x.cols() == 0 || xv.cols() == 0) {
    throw Error(ErrorKind::kEmptySplit, "fusion train and val sets must be non-empty");
  }
  if (static_cast<std::size_t>(x.cols()) != train_labels.size() ||
      static_cast<std::size_t>(xv.cols()) != val_labels.size()) {
    throw Error(ErrorKind::kDimMismatch, "label count differs from sample count");
  }
  widths.insert(widths.begin(), static_cast<int>(x.rows()));
  widths.push_back(2);
  FusionTrainResult result;
  result.head.scheme = scheme;
  result.head.subset = train.subset;
  result.head.net = Mlp::initialize(std::move(widths), config.seed);
  Mlp& net = result.head.net;
  if (scheme == FusionScheme::kLateLinear) {
    // Starts at exact logit averaging: W(j, 2m + j) = 1/k, b = 0.
    const auto k = static_cast<Eigen::Index>(train.subset.size());
    Eigen::Map<Eigen::MatrixXd> w(net.parameters().data(), 2, 2 * k);
    w.setZero();
    for (Eigen::Index m = 0; m < k; ++m) {
      for (Eigen::Index j = 0; j < 2; ++j) w(j, 2 * m + j) = 1.0 / static_cast<double>(k);
    }
    std::fill(net.parameters().begin() + 4 * k, net.parameters().end(), 0.0);
  }
  const LossSpec loss = loss_for_labels(LossKind::kWeightedCrossEntropy, train_labels);

  FitOptions options;
  options.batch_size = config.batch_size;
  options.learning_rate = config.learning_rate;
  options.weight_decay = config.weight_decay;
  options.early_stopping = config.early_stopping;
  options.max_epochs = config.max_epochs;
  options.seed = config.seed;

  std::vector<int> labels;
  auto batch_gradient = [&](std::span<const std::size_t> batch, std::span<double> grad,
                            std::mt19937_64&) {
    Eigen::MatrixXd xb(x.rows(), static_cast<Eigen::Index>(batch.size()));
    labels.clear();
    for (std::size_t i = 0; i < batch.size(); ++i) {
      xb.col(static_cast<Eigen::Index>(i)) = x.col(static_cast<Eigen::Index>(batch[i]));
      labels.push_back(train_labels[batch[i]]);
    }
    Eigen::MatrixXd dlogits;
    const double value = loss_and_gradient(net.forward(xb), labels, loss, dlogits);
    const std::vector<double> g = net.backward(xb, dlogits);
    std::copy(g.begin(), g.end(), grad.begin());
    return value;
  };
  auto validate = [&]() {
    const Eigen::MatrixXd logits = net.forward(xv);
    ValidationStats s;
    s.loss = compute_loss(logits, val_labels, loss);
    std::vector<int> predicted(val_labels.size());
    for (std::size_t i = 0; i < predicted.size(); ++i) {
      predicted[i] = positive_probability(logits.col(static_cast<Eigen::Index>(i))) >= 0.5;
    }
    s.macro_f1 = macro_f1(predicted, val_labels);
    return s;
  };
  result.history = fit(net.parameters(), static_cast<std::size_t>(x.cols()), options,
                       batch_gradient, validate);
  return result;
}

}  // namespace

FusionTrainResult train_late_linear(const FusionInput& train, std::span<const int> train_labels,
                                    const FusionInput& val, std::span<const int> val_labels,
                                    const FusionTrainConfig& config) {
  return train_head(FusionScheme::kLateLinear, {}, train, train_labels, val, val_labels, config);
}

FusionTrainResult train_intermediate(const FusionInput& train, std::span<const int> train_labels,
                                     const FusionInput& val, std::span<const int> val_labels,
                                     const FusionTrainConfig& config) {
  for (int h : config.hidden_sizes) {
    if (h < 1) {
      throw Error(ErrorKind::kDimMismatch, "intermediate fusion hidden sizes must be positive",
                  "hidden_size", h);
    }
  }
  return train_head(FusionScheme::kIntermediate, config.hidden_sizes, train, train_labels, val,
                    val_labels, config);
}

std::vector<double> fuse_predict(const FusionHead& head, const FusionInput& input) {
  if (input.subset != head.subset) {
    throw Error(ErrorKind::kSchemeMismatch,
                fmt::format("head fuses {}, input supplies {}", subset_name(head.subset),
                            subset_name(input.subset)));
  }
  const std::size_t n = input.size();
  std::vector<double> out(n);
  if (head.scheme == FusionScheme::kAverage) {
    if (input.logits.size() != input.subset.size()) {
      throw Error(ErrorKind::kSchemeMismatch, "average fusion needs logits per modality");
    }
    std::vector<double> probs(input.subset.size());
    std::vector<Eigen::Vector2d> zs(input.subset.size());
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t m = 0; m < input.subset.size(); ++m) {
        zs[m] = input.logits[m].col(static_cast<Eigen::Index>(i));
        probs[m] = positive_probability(zs[m]);
      }
      out[i] = head.average_logits ? fuse_average_logits(zs) : fuse_average(probs);
    }
    return out;
  }
  const Eigen::MatrixXd x = fusion_features(head.scheme, input);
  if (x.rows() != head.net.input_width()) {
    throw Error(ErrorKind::kSchemeMismatch,
                fmt::format("head expects width {}, input has {}", head.net.input_width(),
                            x.rows()));
  }
  const Eigen::MatrixXd logits = head.net.forward(x);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = positive_probability(logits.col(static_cast<Eigen::Index>(i)));
  }
  return out;
}

void save_fusion_head(const std::filesystem::path& header_path, const FusionHead& head,
                      const json& extra) {
  json header = extra;
  header["kind"] = "fusion";
  header["scheme"] = std::string(scheme_name(head.scheme));
  header["subset"] = subset_name(head.subset);
  header["average_logits"] = head.average_logits;
  header["widths"] = head.net.widths();
  write_checkpoint(header_path, std::move(header), head.net.parameters());
}

FusionHead load_fusion_head(const std::filesystem::path& header_path) {
  Checkpoint c = read_checkpoint(header_path);
  if (c.header.value("kind", "") != "fusion") {
    throw Error(ErrorKind::kParseError,
                fmt::format("{} is not a fusion checkpoint", header_path.string()),
                header_path.string());
  }
  FusionHead head;
  head.scheme = parse_scheme(c.header.at("scheme").get<std::string>());
  head.subset = parse_subset(c.header.at("subset").get<std::string>());
  head.average_logits = c.header.value("average_logits", false);
  const auto widths = c.header.at("widths").get<std::vector<int>>();
  if (!widths.empty()) {
    head.net = Mlp(widths);
    if (head.net.parameters().size() != c.params.size()) {
      throw Error(ErrorKind::kDimensionMismatch,
                  fmt::format("{}: parameter count does not match widths", header_path.string()));
    }
    head.net.parameters() = std::move(c.params);
  }
  return head;
}

}  // namespace pheno
