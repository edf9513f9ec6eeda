#pragma once

#include <array>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace pheno {

enum class LossKind { kWeightedCrossEntropy, kFocal };

std::string_view loss_name(LossKind k);
LossKind parse_loss(std::string_view s);

struct LossSpec {
  LossKind kind = LossKind::kWeightedCrossEntropy;
  std::array<double, 2> class_weights{1.0, 1.0};  // weighted cross-entropy
  double focal_gamma = 2.0;
  std::array<double, 2> focal_alpha{0.5, 0.5};
};

// Inverse class frequency rescaled to mean 1 over the two classes; (1, 1) when
// either class is absent.
std::array<double, 2> inverse_frequency_weights(std::span<const int> labels);

// Loss spec for a training set: class weights from inverse frequency, focal
// alpha the same weights normalized to sum 1.
LossSpec loss_for_labels(LossKind kind, std::span<const int> labels, double focal_gamma = 2.0);

inline constexpr double kLogFloor = 1e-12;

// Two-class softmax, numerically stable.
Eigen::Vector2d softmax2(const Eigen::Vector2d& logits);
double positive_probability(const Eigen::Vector2d& logits);

// Per-sample loss for a 2 x N logit matrix.
std::vector<double> per_sample_loss(const Eigen::MatrixXd& logits, std::span<const int> labels,
                                    const LossSpec& spec);

// Mean over the batch of the per-sample loss.
double compute_loss(const Eigen::MatrixXd& logits, std::span<const int> labels,
                    const LossSpec& spec);

// Mean loss plus its gradient with respect to the logits (2 x N).
double loss_and_gradient(const Eigen::MatrixXd& logits, std::span<const int> labels,
                         const LossSpec& spec, Eigen::MatrixXd& dlogits);

}  // namespace pheno
