#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pheno/training.hpp"

namespace pheno {

struct SearchSpace {
  std::vector<CellKind> cells{CellKind::kLstm, CellKind::kGru, CellKind::kCnnLstm,
                              CellKind::kCnnGru};
  std::vector<int> hidden_sizes{16, 32, 48, 64};
  std::vector<int> batch_sizes{32, 48, 64, 100};
  int min_layers = 4;
  int max_layers = 8;
  double min_dropout = 0.1;
  double max_dropout = 0.3;
  // Log-uniform ranges; a non-empty choice list replaces the range.
  double min_learning_rate = 1e-4;
  double max_learning_rate = 1e-1;
  std::vector<double> learning_rate_choices;
  double min_weight_decay = 1e-5;
  double max_weight_decay = 1e-2;
  std::vector<LossKind> losses{LossKind::kWeightedCrossEntropy, LossKind::kFocal};
  int max_epochs = 30;
  EarlyStoppingConfig early_stopping;

  void validate() const;
};

nlohmann::json search_space_to_json(const SearchSpace& s);
SearchSpace search_space_from_json(const nlohmann::json& j);

struct TrialConfig {
  ModelSpec spec;
  TrainConfig train;
};

// Draws one configuration; every draw consumes the same number of variates.
TrialConfig sample_trial(const SearchSpace& space, int input_dim, std::mt19937_64& rng);

struct TrialResult {
  int index = 0;
  TrialConfig config;
  bool failed = false;
  std::string error;
  TrainHistory history;
  double val_loss = 0.0;      // at the best epoch
  double val_macro_f1 = 0.0;  // at the best epoch
};

struct SearchResult {
  std::vector<TrialResult> trials;
  int best_index = -1;
  std::optional<RecurrentModel> best_model;

  const TrialResult& best() const;
};

// Trial i trains with seed + i; configs are drawn in order from one generator
// seeded with `seed`, so results do not depend on `jobs`. Winner: highest val
// macro-F1, then lower val loss, then lower index. Throws InvalidConfig when no
// trial succeeds.
SearchResult random_search(const SearchSpace& space, int input_dim,
                           std::span<const LabeledSequence> train_set,
                           std::span<const LabeledSequence> val_set, int trials,
                           std::uint64_t seed, int jobs = 1);

std::string leaderboard_csv(const SearchResult& result);

}  // namespace pheno
