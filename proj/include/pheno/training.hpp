#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "pheno/features.hpp"
#include "pheno/losses.hpp"
#include "pheno/model.hpp"
#include "pheno/optim.hpp"

namespace pheno {

struct TrainConfig {
  int batch_size = 32;
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  LossKind loss = LossKind::kWeightedCrossEntropy;
  double focal_gamma = 2.0;
  AdamConfig adam;
  EarlyStoppingConfig early_stopping;
  int max_epochs = 30;
  std::uint64_t seed = 0;
  double grad_clip_norm = 0.0;

  void validate() const;
  FitOptions fit_options() const;
};

nlohmann::json train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct LabeledSequence {
  Sequence x;
  int label = 0;
};

Sequence to_sequence(const EngineeredSeries& series);

struct TrainResult {
  RecurrentModel model;
  TrainHistory history;
  LossSpec loss;
};

// Class weights come from the training labels and are reused for the
// validation loss.
TrainResult train(const RecurrentModel& initial, std::span<const LabeledSequence> train_set,
                  std::span<const LabeledSequence> val_set, const TrainConfig& config);

// Inference-mode outputs for many sequences, evaluated in batches.
BatchOutput infer(const RecurrentModel& model, std::span<const LabeledSequence> data,
                  int batch_size = 64);
std::vector<double> predict_all(const RecurrentModel& model, std::span<const LabeledSequence> data,
                                int batch_size = 64);

// Softmax probability of label 1.
double predict(const RecurrentModel& model, const Sequence& sequence);
double predict(const RecurrentModel& model, const EngineeredSeries& series);

}  // namespace pheno
