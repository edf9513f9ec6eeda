#include "pheno/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "pheno/error.hpp"

namespace pheno {

Adam::Adam(std::size_t size, double learning_rate, double weight_decay, AdamConfig config)
    : lr_(learning_rate), weight_decay_(weight_decay), cfg_(config), m_(size, 0.0), v_(size, 0.0) {}

void Adam::step(std::span<double> params, std::span<const double> grad) {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad[i] + weight_decay_ * params[i];
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g * g;
    const double m_hat = m_[i] / c1;
    const double v_hat = v_[i] / c2;
    params[i] -= lr_ * m_hat / (std::sqrt(v_hat) + cfg_.epsilon);
  }
}

EarlyStopper::EarlyStopper(EarlyStoppingConfig config) : cfg_(config) {
  if (cfg_.patience < 1 || cfg_.min_delta < 0) {
    throw Error(ErrorKind::kInvalidConfig, "early stopping needs patience >= 1, min_delta >= 0");
  }
}

bool EarlyStopper::update(double val_loss) {
  ++epoch_;
  if (val_loss < best_ - cfg_.min_delta) {
    best_ = val_loss;
    best_epoch_ = epoch_;
    epochs_since_best_ = 0;
    return true;
  }
  ++epochs_since_best_;
  return false;
}

nlohmann::json history_to_json(const TrainHistory& h) {
  return {{"train_loss", h.train_loss},     {"val_loss", h.val_loss},
          {"val_macro_f1", h.val_macro_f1}, {"stopped_epoch", h.stopped_epoch},
          {"best_epoch", h.best_epoch}};
}

TrainHistory history_from_json(const nlohmann::json& j) {
  TrainHistory h;
  h.train_loss = j.at("train_loss").get<std::vector<double>>();
  h.val_loss = j.at("val_loss").get<std::vector<double>>();
  h.val_macro_f1 = j.at("val_macro_f1").get<std::vector<double>>();
  h.stopped_epoch = j.at("stopped_epoch").get<int>();
  h.best_epoch = j.at("best_epoch").get<int>();
  return h;
}

TrainHistory fit(std::vector<double>& params, std::size_t train_size, const FitOptions& options,
                 const BatchGradientFn& batch_gradient, const ValidateFn& validate) {
  if (train_size == 0) throw Error(ErrorKind::kEmptySplit, "training set is empty");
  if (options.batch_size < 1 || options.max_epochs < 1 || !(options.learning_rate > 0)) {
    throw Error(ErrorKind::kInvalidConfig, "fit needs batch_size >= 1, max_epochs >= 1, lr > 0");
  }
  std::mt19937_64 rng(options.seed);
  Adam adam(params.size(), options.learning_rate, options.weight_decay, options.adam);
  EarlyStopper stopper(options.early_stopping);
  TrainHistory history;
  std::vector<double> best = params;
  std::vector<double> grad(params.size());
  std::vector<std::size_t> order(train_size);
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 1; epoch <= options.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    for (std::size_t start = 0; start < train_size; start += options.batch_size) {
      const std::size_t stop =
          std::min(train_size, start + static_cast<std::size_t>(options.batch_size));
      const std::span<const std::size_t> batch(order.data() + start, stop - start);
      std::fill(grad.begin(), grad.end(), 0.0);
      const double loss = batch_gradient(batch, grad, rng);
      if (!std::isfinite(loss)) {
        throw Error(ErrorKind::kDivergenceDetected,
                    fmt::format("non-finite training loss in epoch {}", epoch), "train_loss",
                    loss);
      }
      loss_sum += loss * static_cast<double>(batch.size());
      if (options.grad_clip_norm > 0) {
        double norm = 0;
        for (double g : grad) norm += g * g;
        norm = std::sqrt(norm);
        if (norm > options.grad_clip_norm) {
          const double scale = options.grad_clip_norm / norm;
          for (double& g : grad) g *= scale;
        }
      }
      adam.step(params, grad);
    }
    const ValidationStats val = validate();
    if (!std::isfinite(val.loss)) {
      throw Error(ErrorKind::kDivergenceDetected,
                  fmt::format("non-finite validation loss in epoch {}", epoch), "val_loss",
                  val.loss);
    }
    history.train_loss.push_back(loss_sum / static_cast<double>(train_size));
    history.val_loss.push_back(val.loss);
    history.val_macro_f1.push_back(val.macro_f1);
    history.stopped_epoch = epoch;
    if (stopper.update(val.loss)) best = params;
    if (stopper.should_stop()) break;
  }
  history.best_epoch = stopper.best_epoch();
  params = std::move(best);
  return history;
}

}  // namespace pheno
