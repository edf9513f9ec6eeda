#include "pheno/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "pheno/error.hpp"

namespace pheno {

double gradient_relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradCheckFloor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport grad_check(const ModelSpec& spec, const GradCheckOptions& options) {
  spec.validate();
  if (spec.hidden_size > 8 || spec.num_layers > 2 || options.max_length > 6 ||
      options.max_length < 1 || options.batch < 1) {
    throw Error(ErrorKind::kInvalidSpec,
                "grad_check needs hidden_size <= 8, num_layers <= 2, length in [1, 6]");
  }
  RecurrentModel model = RecurrentModel::initialize(spec, options.seed);

  std::mt19937_64 rng(options.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Sequence> inputs;
  std::vector<int> labels;
  for (int b = 0; b < options.batch; ++b) {
    const int length = std::max(1, options.max_length - 2 * b);
    Sequence x(spec.input_dim, length);
    for (int t = 0; t < length; ++t) {
      const bool missing = unit(rng) < 0.2;
      for (int k = 0; k < spec.input_dim; ++k) x(k, t) = missing ? -1.0 : unit(rng);
    }
    inputs.push_back(std::move(x));
    labels.push_back(b % 2);
  }
  std::vector<const Sequence*> ptrs;
  for (const auto& x : inputs) ptrs.push_back(&x);
  LossSpec loss = loss_for_labels(options.loss, labels);
  // Uneven weights exercise the weighting path.
  loss.class_weights = {0.7, 1.3};

  const std::uint64_t dropout_seed = options.seed + 17;
  auto objective = [&](Eigen::MatrixXd* dlogits, ForwardTape* tape) {
    std::mt19937_64 drop_rng(dropout_seed);
    const BatchOutput out = forward_batch(model, ptrs, true, &drop_rng, tape);
    if (dlogits) return loss_and_gradient(out.logits, labels, loss, *dlogits);
    return compute_loss(out.logits, labels, loss);
  };

  ForwardTape tape;
  Eigen::MatrixXd dlogits;
  objective(&dlogits, &tape);
  std::vector<double> analytic = backward(model, tape, dlogits);
  if (options.mutate_gradient) options.mutate_gradient(model, analytic);

  GradCheckReport report;
  std::vector<double>& params = model.parameters();
  for (const TensorInfo& info : model.tensors()) {
    TensorGradError err{info.name, 0, 0.0};
    for (std::size_t i = 0; i < info.size(); ++i) {
      const std::size_t p = info.offset + i;
      const double saved = params[p];
      params[p] = saved + options.step;
      const double up = objective(nullptr, nullptr);
      params[p] = saved - options.step;
      const double down = objective(nullptr, nullptr);
      params[p] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double rel = gradient_relative_error(analytic[p], numeric);
      if (rel > err.max_rel_error) {
        err.max_rel_error = rel;
        err.worst_index = i;
      }
    }
    if (err.max_rel_error >= report.max_rel_error) {
      report.max_rel_error = err.max_rel_error;
      report.worst_tensor = err.tensor;
      report.worst_index = err.worst_index;
    }
    report.tensors.push_back(std::move(err));
  }
  report.passed = report.max_rel_error < options.tolerance;
  if (!report.passed) {
    throw Error(ErrorKind::kGradMismatch,
                fmt::format("gradient mismatch in {}[{}]: relative error {:.3g}",
                            report.worst_tensor, report.worst_index, report.max_rel_error),
                fmt::format("{}[{}]", report.worst_tensor, report.worst_index),
                report.max_rel_error);
  }
  return report;
}

}  // namespace pheno
