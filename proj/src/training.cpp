#include "pheno/training.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "pheno/error.hpp"
#include "pheno/evaluation.hpp"

namespace pheno {

using nlohmann::json;

void TrainConfig::validate() const {
  if (batch_size < 1) throw Error(ErrorKind::kInvalidConfig, "batch_size must be >= 1");
  if (!(learning_rate > 0)) throw Error(ErrorKind::kInvalidConfig, "learning_rate must be > 0");
  if (weight_decay < 0) throw Error(ErrorKind::kInvalidConfig, "weight_decay must be >= 0");
  if (early_stopping.patience < 1 || early_stopping.min_delta < 0) {
    throw Error(ErrorKind::kInvalidConfig, "early stopping needs patience >= 1, min_delta >= 0");
  }
  if (max_epochs < 1) throw Error(ErrorKind::kInvalidConfig, "max_epochs must be >= 1");
}

FitOptions TrainConfig::fit_options() const {
  FitOptions o;
  o.batch_size = batch_size;
  o.learning_rate = learning_rate;
  o.weight_decay = weight_decay;
  o.adam = adam;
  o.early_stopping = early_stopping;
  o.max_epochs = max_epochs;
  o.seed = seed;
  o.grad_clip_norm = grad_clip_norm;
  return o;
}

json train_config_to_json(const TrainConfig& c) {
  return json{{"batch_size", c.batch_size},
              {"learning_rate", c.learning_rate},
              {"weight_decay", c.weight_decay},
              {"loss", std::string(loss_name(c.loss))},
              {"focal_gamma", c.focal_gamma},
              {"adam", {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"epsilon", c.adam.epsilon}}},
              {"patience", c.early_stopping.patience},
              {"min_delta", c.early_stopping.min_delta},
              {"max_epochs", c.max_epochs},
              {"seed", c.seed},
              {"grad_clip_norm", c.grad_clip_norm}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  try {
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    if (j.contains("loss")) c.loss = parse_loss(j.at("loss").get<std::string>());
    c.focal_gamma = j.value("focal_gamma", c.focal_gamma);
    if (j.contains("adam")) {
      const json& a = j.at("adam");
      c.adam.beta1 = a.value("beta1", c.adam.beta1);
      c.adam.beta2 = a.value("beta2", c.adam.beta2);
      c.adam.epsilon = a.value("epsilon", c.adam.epsilon);
    }
    c.early_stopping.patience = j.value("patience", c.early_stopping.patience);
    c.early_stopping.min_delta = j.value("min_delta", c.early_stopping.min_delta);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.seed = j.value("seed", c.seed);
    c.grad_clip_norm = j.value("grad_clip_norm", c.grad_clip_norm);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kConfigError, fmt::format("bad train config: {}", e.what()));
  }
  c.validate();
  return c;
}

Sequence to_sequence(const EngineeredSeries& series) {
  const int d = series.dim();
  Sequence x(d, static_cast<Eigen::Index>(series.frames.size()));
  for (std::size_t t = 0; t < series.frames.size(); ++t) {
    const FeatureVector& f = series.frames[t];
    if (static_cast<int>(f.size()) != d) {
      throw Error(ErrorKind::kDimMismatch, "engineered frame has the wrong length", "d",
                  static_cast<double>(f.size()));
    }
    for (int k = 0; k < d; ++k) x(k, static_cast<Eigen::Index>(t)) = f[k];
  }
  return x;
}

BatchOutput infer(const RecurrentModel& model, std::span<const LabeledSequence> data,
                  int batch_size) {
  BatchOutput all;
  const auto n = static_cast<Eigen::Index>(data.size());
  all.logits.resize(2, n);
  all.hidden.resize(model.spec().hidden_size, n);
  std::vector<const Sequence*> ptrs;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t stop = std::min(data.size(), start + static_cast<std::size_t>(batch_size));
    ptrs.clear();
    for (std::size_t i = start; i < stop; ++i) ptrs.push_back(&data[i].x);
    const BatchOutput out = forward_batch(model, ptrs, false);
    const auto s = static_cast<Eigen::Index>(start);
    const auto w = static_cast<Eigen::Index>(stop - start);
    all.logits.middleCols(s, w) = out.logits;
    all.hidden.middleCols(s, w) = out.hidden;
  }
  return all;
}

std::vector<double> predict_all(const RecurrentModel& model, std::span<const LabeledSequence> data,
                                int batch_size) {
  const BatchOutput out = infer(model, data, batch_size);
  std::vector<double> p(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    p[i] = positive_probability(out.logits.col(static_cast<Eigen::Index>(i)));
  }
  return p;
}

double predict(const RecurrentModel& model, const Sequence& sequence) {
  return positive_probability(forward(model, sequence, false).logits);
}

double predict(const RecurrentModel& model, const EngineeredSeries& series) {
  if (series.frames.empty()) throw Error(ErrorKind::kEmptySequence, "engineered series is empty");
  return predict(model, to_sequence(series));
}

TrainResult train(const RecurrentModel& initial, std::span<const LabeledSequence> train_set,
                  std::span<const LabeledSequence> val_set, const TrainConfig& config) {
  if (train_set.empty() || val_set.empty()) {
    throw Error(ErrorKind::kEmptySplit, "train and validation sets must be non-empty");
  }
  config.validate();
  std::vector<int> train_labels;
  for (const auto& s : train_set) train_labels.push_back(s.label);
  std::vector<int> val_labels;
  for (const auto& s : val_set) val_labels.push_back(s.label);
  const LossSpec loss = loss_for_labels(config.loss, train_labels, config.focal_gamma);

  RecurrentModel model = initial;
  std::vector<const Sequence*> ptrs;
  std::vector<int> labels;
  auto batch_gradient = [&](std::span<const std::size_t> batch, std::span<double> grad,
                            std::mt19937_64& rng) {
    ptrs.clear();
    labels.clear();
    for (std::size_t i : batch) {
      ptrs.push_back(&train_set[i].x);
      labels.push_back(train_set[i].label);
    }
    ForwardTape tape;
    const BatchOutput out = forward_batch(model, ptrs, true, &rng, &tape);
    Eigen::MatrixXd dlogits;
    const double value = loss_and_gradient(out.logits, labels, loss, dlogits);
    const std::vector<double> g = backward(model, tape, dlogits);
    std::copy(g.begin(), g.end(), grad.begin());
    return value;
  };
  auto validate = [&]() {
    const BatchOutput out = infer(model, val_set);
    ValidationStats stats;
    stats.loss = compute_loss(out.logits, val_labels, loss);
    std::vector<int> predicted(val_set.size());
    for (std::size_t i = 0; i < val_set.size(); ++i) {
      predicted[i] = positive_probability(out.logits.col(static_cast<Eigen::Index>(i))) >= 0.5;
    }
    stats.macro_f1 = macro_f1(predicted, val_labels);
    return stats;
  };

  TrainHistory history =
      fit(model.parameters(), train_set.size(), config.fit_options(), batch_gradient, validate);
  return {std::move(model), std::move(history), loss};
}

}  // namespace pheno
