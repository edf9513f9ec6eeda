#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include <json.hpp>

namespace pheno {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam with L2 weight decay folded into the gradient.
class Adam {
 public:
  Adam(std::size_t size, double learning_rate, double weight_decay = 0.0, AdamConfig config = {});

  void step(std::span<double> params, std::span<const double> grad);
  long steps() const { return t_; }

 private:
  double lr_;
  double weight_decay_;
  AdamConfig cfg_;
  std::vector<double> m_;
  std::vector<double> v_;
  long t_ = 0;
};

struct EarlyStoppingConfig {
  int patience = 3;
  double min_delta = 0.001;
};

// Tracks validation loss; an epoch improves when it beats the best so far by
// more than min_delta. Epochs are numbered from 1.
class EarlyStopper {
 public:
  explicit EarlyStopper(EarlyStoppingConfig config);

  // Returns true when this epoch is the new best.
  bool update(double val_loss);
  bool should_stop() const { return epochs_since_best_ >= cfg_.patience; }
  int best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_; }
  int epoch() const { return epoch_; }

 private:
  EarlyStoppingConfig cfg_;
  double best_ = std::numeric_limits<double>::infinity();
  int best_epoch_ = 0;
  int epoch_ = 0;
  int epochs_since_best_ = 0;
};

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::vector<double> val_macro_f1;
  int stopped_epoch = 0;
  int best_epoch = 0;

  bool operator==(const TrainHistory&) const = default;
};

nlohmann::json history_to_json(const TrainHistory& h);
TrainHistory history_from_json(const nlohmann::json& j);

struct FitOptions {
  int batch_size = 32;
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  AdamConfig adam;
  EarlyStoppingConfig early_stopping;
  int max_epochs = 30;
  std::uint64_t seed = 0;
  double grad_clip_norm = 0.0;  // 0 disables clipping
};

struct ValidationStats {
  double loss = 0.0;
  double macro_f1 = 0.0;
};

// Mean batch loss; writes the batch gradient into `grad` (pre-sized, zeroed).
using BatchGradientFn = std::function<double(std::span<const std::size_t> batch,
                                             std::span<double> grad, std::mt19937_64& rng)>;
using ValidateFn = std::function<ValidationStats()>;

// Shuffled mini-batch Adam with early stopping on validation loss. On return
// `params` holds the best-validation-loss epoch. Throws DivergenceDetected on a
// non-finite loss.
TrainHistory fit(std::vector<double>& params, std::size_t train_size, const FitOptions& options,
                 const BatchGradientFn& batch_gradient, const ValidateFn& validate);

}  // namespace pheno
