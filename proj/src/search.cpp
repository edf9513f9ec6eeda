#include "pheno/search.hpp"

#include <cmath>
#include <future>

#include <fmt/format.h>

#include "pheno/error.hpp"

namespace pheno {

using nlohmann::json;

void SearchSpace::validate() const {
  if (cells.empty() || hidden_sizes.empty() || batch_sizes.empty() || losses.empty()) {
    throw Error(ErrorKind::kInvalidConfig, "search space has an empty choice list");
  }
  if (min_layers < 1 || max_layers < min_layers) {
    throw Error(ErrorKind::kInvalidConfig, "layer range must satisfy 1 <= min <= max");
  }
  if (min_dropout < 0 || max_dropout >= 1 || max_dropout < min_dropout) {
    throw Error(ErrorKind::kInvalidConfig, "dropout range must lie in [0, 1)");
  }
  if (!(min_learning_rate > 0) || max_learning_rate < min_learning_rate) {
    throw Error(ErrorKind::kInvalidConfig, "learning rate range must be positive");
  }
  for (double lr : learning_rate_choices) {
    if (!(lr > 0)) throw Error(ErrorKind::kInvalidConfig, "learning rate choices must be > 0");
  }
  if (!(min_weight_decay > 0) || max_weight_decay < min_weight_decay) {
    throw Error(ErrorKind::kInvalidConfig, "weight decay range must be positive");
  }
  if (max_epochs < 1) throw Error(ErrorKind::kInvalidConfig, "max_epochs must be >= 1");
}

json search_space_to_json(const SearchSpace& s) {
  json cells = json::array();
  for (CellKind c : s.cells) cells.push_back(std::string(cell_name(c)));
  json losses = json::array();
  for (LossKind l : s.losses) losses.push_back(std::string(loss_name(l)));
  return json{{"cells", cells},
              {"hidden_sizes", s.hidden_sizes},
              {"batch_sizes", s.batch_sizes},
              {"layers", {s.min_layers, s.max_layers}},
              {"dropout", {s.min_dropout, s.max_dropout}},
              {"learning_rate", {s.min_learning_rate, s.max_learning_rate}},
              {"learning_rate_choices", s.learning_rate_choices},
              {"weight_decay", {s.min_weight_decay, s.max_weight_decay}},
              {"losses", losses},
              {"max_epochs", s.max_epochs},
              {"patience", s.early_stopping.patience},
              {"min_delta", s.early_stopping.min_delta}};
}

SearchSpace search_space_from_json(const json& j) {
  SearchSpace s;
  try {
    if (j.contains("cells")) {
      s.cells.clear();
      for (const auto& c : j.at("cells")) s.cells.push_back(parse_cell(c.get<std::string>()));
    }
    if (j.contains("losses")) {
      s.losses.clear();
      for (const auto& l : j.at("losses")) s.losses.push_back(parse_loss(l.get<std::string>()));
    }
    s.hidden_sizes = j.value("hidden_sizes", s.hidden_sizes);
    s.batch_sizes = j.value("batch_sizes", s.batch_sizes);
    if (j.contains("layers")) {
      s.min_layers = j.at("layers").at(0).get<int>();
      s.max_layers = j.at("layers").at(1).get<int>();
    }
    if (j.contains("dropout")) {
      s.min_dropout = j.at("dropout").at(0).get<double>();
      s.max_dropout = j.at("dropout").at(1).get<double>();
    }
    if (j.contains("learning_rate")) {
      s.min_learning_rate = j.at("learning_rate").at(0).get<double>();
      s.max_learning_rate = j.at("learning_rate").at(1).get<double>();
    }
    s.learning_rate_choices = j.value("learning_rate_choices", s.learning_rate_choices);
    if (j.contains("weight_decay")) {
      s.min_weight_decay = j.at("weight_decay").at(0).get<double>();
      s.max_weight_decay = j.at("weight_decay").at(1).get<double>();
    }
    s.max_epochs = j.value("max_epochs", s.max_epochs);
    s.early_stopping.patience = j.value("patience", s.early_stopping.patience);
    s.early_stopping.min_delta = j.value("min_delta", s.early_stopping.min_delta);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kConfigError, fmt::format("bad search space: {}", e.what()));
  }
  s.validate();
  return s;
}

namespace {

template <typename T>
const T& pick(const std::vector<T>& v, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> d(0, v.size() - 1);
  return v[d(rng)];
}

double log_uniform(double lo, double hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(std::log(lo), std::log(hi));
  return std::exp(d(rng));
}

}  // namespace

TrialConfig sample_trial(const SearchSpace& space, int input_dim, std::mt19937_64& rng) {
  TrialConfig t;
  t.spec.input_dim = input_dim;
  t.spec.cell = pick(space.cells, rng);
  t.spec.hidden_size = pick(space.hidden_sizes, rng);
  t.spec.num_layers = std::uniform_int_distribution<int>(space.min_layers, space.max_layers)(rng);
  t.spec.dropout = std::uniform_real_distribution<double>(space.min_dropout, space.max_dropout)(rng);
  t.train.batch_size = pick(space.batch_sizes, rng);
  const double lr = log_uniform(space.min_learning_rate, space.max_learning_rate, rng);
  t.train.learning_rate =
      space.learning_rate_choices.empty() ? lr : pick(space.learning_rate_choices, rng);
  t.train.weight_decay = log_uniform(space.min_weight_decay, space.max_weight_decay, rng);
  t.train.loss = pick(space.losses, rng);
  t.train.max_epochs = space.max_epochs;
  t.train.early_stopping = space.early_stopping;
  return t;
}

const TrialResult& SearchResult::best() const {
  if (best_index < 0) throw Error(ErrorKind::kInvalidConfig, "search has no successful trial");
  return trials.at(static_cast<std::size_t>(best_index));
}

SearchResult random_search(const SearchSpace& space, int input_dim,
                           std::span<const LabeledSequence> train_set,
                           std::span<const LabeledSequence> val_set, int trials,
                           std::uint64_t seed, int jobs) {
  if (trials < 1) throw Error(ErrorKind::kInvalidConfig, "trials must be >= 1");
  if (train_set.empty() || val_set.empty()) {
    throw Error(ErrorKind::kEmptySplit, "train and validation sets must be non-empty");
  }
  space.validate();
  std::mt19937_64 rng(seed);
  SearchResult result;
  result.trials.resize(static_cast<std::size_t>(trials));
  for (int i = 0; i < trials; ++i) {
    TrialResult& t = result.trials[static_cast<std::size_t>(i)];
    t.index = i;
    t.config = sample_trial(space, input_dim, rng);
    t.config.train.seed = seed + static_cast<std::uint64_t>(i);
  }

  std::vector<std::optional<RecurrentModel>> models(result.trials.size());
  auto run = [&](std::size_t i) {
    TrialResult& t = result.trials[i];
    try {
      const RecurrentModel init = RecurrentModel::initialize(t.config.spec, t.config.train.seed);
      TrainResult r = train(init, train_set, val_set, t.config.train);
      t.history = r.history;
      const auto best = static_cast<std::size_t>(r.history.best_epoch - 1);
      t.val_loss = r.history.val_loss.at(best);
      t.val_macro_f1 = r.history.val_macro_f1.at(best);
      models[i] = std::move(r.model);
    } catch (const std::exception& e) {
      t.failed = true;
      t.error = e.what();
    }
  };
  const std::size_t width = static_cast<std::size_t>(std::max(1, jobs));
  for (std::size_t start = 0; start < result.trials.size(); start += width) {
    const std::size_t stop = std::min(result.trials.size(), start + width);
    if (width == 1) {
      run(start);
      continue;
    }
    std::vector<std::future<void>> pending;
    for (std::size_t i = start; i < stop; ++i) pending.push_back(std::async(std::launch::async, run, i));
    for (auto& f : pending) f.get();
  }

  for (const TrialResult& t : result.trials) {
    if (t.failed) continue;
    if (result.best_index < 0) {
      result.best_index = t.index;
      continue;
    }
    const TrialResult& b = result.best();
    if (t.val_macro_f1 > b.val_macro_f1 ||
        (t.val_macro_f1 == b.val_macro_f1 && t.val_loss < b.val_loss)) {
      result.best_index = t.index;
    }
  }
  if (result.best_index < 0) throw Error(ErrorKind::kInvalidConfig, "every search trial failed");
  result.best_model = std::move(models[static_cast<std::size_t>(result.best_index)]);
  return result;
}

std::string leaderboard_csv(const SearchResult& result) {
  std::string out =
      "trial,status,cell,hidden_size,num_layers,dropout,batch_size,learning_rate,weight_decay,"
      "loss,epochs,best_epoch,val_loss,val_macro_f1,winner\n";
  for (const TrialResult& t : result.trials) {
    const auto& s = t.config.spec;
    const auto& c = t.config.train;
    out += fmt::format("{},{},{},{},{},{:.6g},{},{:.6g},{:.6g},{},{},{},{:.6f},{:.6f},{}\n", t.index,
                       t.failed ? "failed" : "ok", cell_name(s.cell), s.hidden_size, s.num_layers,
                       s.dropout, c.batch_size, c.learning_rate, c.weight_decay, loss_name(c.loss),
                       t.history.stopped_epoch, t.history.best_epoch, t.val_loss, t.val_macro_f1,
                       t.index == result.best_index ? 1 : 0);
  }
  return out;
}

}  // namespace pheno
