#include "pheno/losses.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include <fmt/format.h>

#include "pheno/error.hpp"

namespace pheno {

std::string_view loss_name(LossKind k) {
  return k == LossKind::kFocal ? "focal" : "weighted_cross_entropy";
}

LossKind parse_loss(std::string_view s) {
  std::string v(s);
  std::transform(v.begin(), v.end(), v.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (v == "focal" || v == "focal_loss") return LossKind::kFocal;
  if (v == "weighted_cross_entropy" || v == "cross_entropy" || v == "ce") {
    return LossKind::kWeightedCrossEntropy;
  }
  throw Error(ErrorKind::kConfigError, fmt::format("unknown loss '{}'", s), std::string(s));
}

std::array<double, 2> inverse_frequency_weights(std::span<const int> labels) {
  std::array<double, 2> n{0, 0};
  for (int y : labels) n[y == 1 ? 1 : 0] += 1;
  if (n[0] == 0 || n[1] == 0) return {1.0, 1.0};
  const double inv0 = 1.0 / n[0];
  const double inv1 = 1.0 / n[1];
  const double mean = 0.5 * (inv0 + inv1);
  return {inv0 / mean, inv1 / mean};
}

LossSpec loss_for_labels(LossKind kind, std::span<const int> labels, double focal_gamma) {
  LossSpec spec;
  spec.kind = kind;
  spec.class_weights = inverse_frequency_weights(labels);
  const double sum = spec.class_weights[0] + spec.class_weights[1];
  spec.focal_alpha = {spec.class_weights[0] / sum, spec.class_weights[1] / sum};
  spec.focal_gamma = focal_gamma;
  return spec;
}

Eigen::Vector2d softmax2(const Eigen::Vector2d& logits) {
  const double m = logits.maxCoeff();
  const double e0 = std::exp(logits[0] - m);
  const double e1 = std::exp(logits[1] - m);
  const double s = e0 + e1;
  return {e0 / s, e1 / s};
}

double positive_probability(const Eigen::Vector2d& logits) {
  // 1 / (1 + exp(z0 - z1)) keeps full precision in the tails.
  const double diff = logits[0] - logits[1];
  if (diff >= 0) {
    const double e = std::exp(-diff);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(diff));
}

namespace {

struct SampleTerm {
  double loss;
  // d loss / d p_y multiplied by p_y; the logit gradient is this times
  // (1[j == y] - p_j).
  double scaled_slope;
};

SampleTerm sample_term(const Eigen::Vector2d& logits, int y, const LossSpec& spec) {
  const Eigen::Vector2d p = softmax2(logits);
  const double py = p[y];
  const double log_p = std::log(std::max(py, kLogFloor));
  if (spec.kind == LossKind::kWeightedCrossEntropy) {
    const double w = spec.class_weights[y];
    return {-w * log_p, -w};
  }
  const double a = spec.focal_alpha[y];
  const double g = spec.focal_gamma;
  const double one_minus = 1.0 - py;
  const double mod = g == 0.0 ? 1.0 : std::pow(one_minus, g);
  const double dmod = g == 0.0 ? 0.0 : (one_minus > 0 ? -g * std::pow(one_minus, g - 1.0) : 0.0);
  return {-a * mod * log_p, -a * (dmod * log_p * py + mod)};
}

}  // namespace

std::vector<double> per_sample_loss(const Eigen::MatrixXd& logits, std::span<const int> labels,
                                    const LossSpec& spec) {
  std::vector<double> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out[i] = sample_term(logits.col(static_cast<Eigen::Index>(i)), labels[i], spec).loss;
  }
  return out;
}

double compute_loss(const Eigen::MatrixXd& logits, std::span<const int> labels,
                    const LossSpec& spec) {
  if (labels.empty()) return 0.0;
  double sum = 0;
  for (double v : per_sample_loss(logits, labels, spec)) sum += v;
  return sum / static_cast<double>(labels.size());
}

double loss_and_gradient(const Eigen::MatrixXd& logits, std::span<const int> labels,
                         const LossSpec& spec, Eigen::MatrixXd& dlogits) {
  const auto n = static_cast<Eigen::Index>(labels.size());
  dlogits = Eigen::MatrixXd::Zero(2, n);
  if (n == 0) return 0.0;
  double sum = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = labels[i];
    const Eigen::Vector2d z = logits.col(i);
    const SampleTerm term = sample_term(z, y, spec);
    sum += term.loss;
    const Eigen::Vector2d p = softmax2(z);
    // d p_y / d z_j = p_y (1[j == y] - p_j)
    for (int j = 0; j < 2; ++j) {
      dlogits(j, i) = term.scaled_slope * ((j == y ? 1.0 : 0.0) - p[j]) / static_cast<double>(n);
    }
  }
  return sum / static_cast<double>(n);
}

}  // namespace pheno
