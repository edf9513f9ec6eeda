#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pheno/losses.hpp"
#include "pheno/model.hpp"

namespace pheno {

struct GradCheckOptions {
  double tolerance = 1e-4;
  double step = 1e-5;
  std::uint64_t seed = 0;
  int batch = 3;
  int max_length = 5;
  LossKind loss = LossKind::kWeightedCrossEntropy;
  // Applied to the analytic gradient before comparison; used to plant faults.
  std::function<void(const RecurrentModel&, std::vector<double>&)> mutate_gradient;
};

struct TensorGradError {
  std::string tensor;
  std::size_t worst_index = 0;
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<TensorGradError> tensors;
  double max_rel_error = 0.0;
  std::string worst_tensor;
  std::size_t worst_index = 0;
  bool passed = false;
};

// |a - n| / max(|a|, |n|, kGradCheckFloor); the floor keeps near-zero
// gradients from dominating through rounding noise.
inline constexpr double kGradCheckFloor = 1e-6;
double gradient_relative_error(double analytic, double numeric);

// Compares backpropagated gradients with central differences on seeded random
// inputs of varying length, including -1 token frames. Dropout, when present,
// uses one fixed mask for every evaluation. Throws InvalidSpec when the spec is
// larger than h 8, 2 layers, length 6 and GradMismatch when the check fails.
GradCheckReport grad_check(const ModelSpec& spec, const GradCheckOptions& options = {});

}  // namespace pheno
