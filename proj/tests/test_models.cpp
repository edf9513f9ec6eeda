#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "pheno/checkpoint.hpp"
#include "pheno/error.hpp"
#include "pheno/grad_check.hpp"
#include "pheno/losses.hpp"
#include "pheno/model.hpp"
#include "pheno/optim.hpp"
#include "pheno/search.hpp"
#include "pheno/training.hpp"
#include "test_support.hpp"

namespace pheno {
namespace {

using testing::Gen;
using testing::for_all;

constexpr CellKind kCells[] = {CellKind::kLstm, CellKind::kGru, CellKind::kCnnLstm,
                               CellKind::kCnnGru};

ModelSpec spec_of(CellKind cell, int d, int h, int layers, double dropout = 0.0) {
  ModelSpec s;
  s.cell = cell;
  s.input_dim = d;
  s.hidden_size = h;
  s.num_layers = layers;
  s.dropout = dropout;
  return s;
}

Sequence random_sequence(Gen& g, int d, int length, double missing = 0.2) {
  Sequence x(d, length);
  for (int t = 0; t < length; ++t) {
    const bool token = g.coin(missing);
    for (int i = 0; i < d; ++i) x(i, t) = token ? -1.0 : g.real(0, 1);
  }
  return x;
}

TEST(ModelSpecTest, HiddenSizeZeroIsInvalid) {
  EXPECT_PHENO_ERROR(RecurrentModel::initialize(spec_of(CellKind::kLstm, 2, 0, 1), 0),
                     ErrorKind::kInvalidSpec);
  EXPECT_PHENO_ERROR(spec_of(CellKind::kGru, 5, 8, 1).validate(), ErrorKind::kInvalidSpec);
  EXPECT_PHENO_ERROR(spec_of(CellKind::kGru, 2, 8, 1, 1.0).validate(), ErrorKind::kInvalidSpec);
}

TEST(ModelSpecTest, LstmParameterCountMatchesClosedForm) {
  const int d = 2;
  const int h = 64;
  const std::size_t expected = 4 * (h * (d + h) + h) + 7 * 4 * (h * 2 * h + h) + (2 * h + 2);
  EXPECT_EQ(parameter_count(spec_of(CellKind::kLstm, d, h, 8)), expected);
}

TEST(ModelSpecTest, ParameterCountForEveryCell) {
  for (CellKind cell : kCells) {
    for (int d : {2, 7, 60}) {
      const ModelSpec s = spec_of(cell, d, 16, 3);
      const std::size_t g = s.is_gru() ? 3 : 4;
      const std::size_t c = static_cast<std::size_t>(d);
      const std::size_t conv = s.has_conv() ? c * 5 * c + c : 0;
      const std::size_t first = g * 16 * (c + 16) + g * 16;
      const std::size_t later = 2 * (g * 16 * 32 + g * 16);
      EXPECT_EQ(parameter_count(s), conv + first + later + 2 * 16 + 2) << cell_name(cell);
    }
  }
}

TEST(ModelTest, SameSeedSameWeights) {
  const ModelSpec s = spec_of(CellKind::kCnnGru, 7, 8, 2);
  EXPECT_EQ(RecurrentModel::initialize(s, 11).parameters(),
            RecurrentModel::initialize(s, 11).parameters());
  EXPECT_NE(RecurrentModel::initialize(s, 11).parameters(),
            RecurrentModel::initialize(s, 12).parameters());
}

TEST(ModelTest, ZeroWeightsGiveZeroLogits) {
  Gen g(1);
  for (CellKind cell : kCells) {
    const RecurrentModel m(spec_of(cell, 7, 8, 2));
    const ForwardResult r = forward(m, random_sequence(g, 7, 9));
    EXPECT_EQ(r.logits, Eigen::Vector2d::Zero());
    EXPECT_EQ(positive_probability(r.logits), 0.5);
  }
}

TEST(ModelTest, LengthOneAndRepeatedInference) {
  Gen g(2);
  for (CellKind cell : kCells) {
    const RecurrentModel m = RecurrentModel::initialize(spec_of(cell, 2, 8, 2, 0.3), 4);
    const Sequence x = random_sequence(g, 2, 1);
    const ForwardResult a = forward(m, x);
    const ForwardResult b = forward(m, x);
    EXPECT_TRUE(a.logits.allFinite());
    EXPECT_EQ(a.logits, b.logits);
    EXPECT_EQ(a.hidden.size(), 8);
  }
}

TEST(ModelTest, EmptySequenceIsRejected) {
  const RecurrentModel m = RecurrentModel::initialize(spec_of(CellKind::kGru, 2, 4, 1), 0);
  EXPECT_PHENO_ERROR(forward(m, Sequence(2, 0)), ErrorKind::kEmptySequence);
}

TEST(LossTest, ConfidentCorrectPredictionIsNearZero) {
  Eigen::MatrixXd logits(2, 1);
  logits << -40, 40;
  const std::vector<int> y{1};
  EXPECT_LE(compute_loss(logits, y, LossSpec{}), 1e-10);
}

TEST(LossTest, EvenOddsCostLnTwo) {
  const Eigen::MatrixXd logits = Eigen::MatrixXd::Zero(2, 1);
  const std::vector<int> y{0};
  EXPECT_NEAR(compute_loss(logits, y, LossSpec{}), std::numbers::ln2, 1e-15);
}

TEST(LossProperty, FocalWithZeroGammaEqualsWeightedCrossEntropy) {
  for_all(100, [](Gen& g) {
    const int n = g.integer(1, 12);
    Eigen::MatrixXd logits(2, n);
    std::vector<int> y(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      logits(0, i) = g.real(-6, 6);
      logits(1, i) = g.real(-6, 6);
      y[static_cast<std::size_t>(i)] = g.integer(0, 1);
    }
    LossSpec wce;
    wce.class_weights = {g.real(0.1, 3), g.real(0.1, 3)};
    LossSpec focal = wce;
    focal.kind = LossKind::kFocal;
    focal.focal_gamma = 0.0;
    focal.focal_alpha = wce.class_weights;
    const auto a = per_sample_loss(logits, y, wce);
    const auto b = per_sample_loss(logits, y, focal);
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_NEAR(a[i], b[i], 1e-12);
      EXPECT_GE(a[i], 0.0);
    }
    LossSpec focal2 = focal;
    focal2.focal_gamma = 2.0;
    for (double v : per_sample_loss(logits, y, focal2)) EXPECT_GE(v, 0.0);
    // Uniform weights reduce to plain cross-entropy.
    for (std::size_t i = 0; i < a.size(); ++i) {
      const Eigen::Vector2d p = softmax2(logits.col(static_cast<long>(i)));
      EXPECT_NEAR(per_sample_loss(logits, y, LossSpec{})[i], -std::log(p(y[i])), 1e-12);
    }
  });
}

TEST(LossTest, InverseFrequencyWeightsHaveMeanOne) {
  const std::vector<int> y{1, 1, 1, 0};
  const auto w = inverse_frequency_weights(y);
  EXPECT_NEAR(0.5 * (w[0] + w[1]), 1.0, 1e-15);
  EXPECT_NEAR(w[0] / w[1], 3.0, 1e-12);
  const std::vector<int> single{1, 1};
  EXPECT_EQ(inverse_frequency_weights(single), (std::array<double, 2>{1.0, 1.0}));
}

TEST(SoftmaxTest, ClosedFormsAndMonotonicity) {
  EXPECT_EQ(positive_probability(Eigen::Vector2d(0, 0)), 0.5);
  EXPECT_NEAR(positive_probability(Eigen::Vector2d(0, std::log(3.0))), 0.75, 1e-15);
  double previous = 0.0;
  for (double l1 = -10; l1 <= 10; l1 += 0.5) {
    const double p = positive_probability(Eigen::Vector2d(0.3, l1));
    EXPECT_GT(p, previous);
    previous = p;
  }
}

TEST(SoftmaxProperty, ProbabilitiesSumToOne) {
  for_all(200, [](Gen& g) {
    const Eigen::Vector2d p = softmax2(Eigen::Vector2d(g.real(-700, 700), g.real(-700, 700)));
    EXPECT_NEAR(p.sum(), 1.0, 1e-12);
    EXPECT_TRUE(p.allFinite());
  });
}

TEST(PaddingProperty, BatchedLossEqualsPerSequenceLoss) {
  for_all(40, [](Gen& g) {
    const CellKind cell = kCells[g.integer(0, 3)];
    const RecurrentModel m = RecurrentModel::initialize(spec_of(cell, 2, 6, g.integer(1, 2)),
                                                        static_cast<std::uint64_t>(g.integer(0, 99)));
    std::vector<Sequence> xs;
    for (int k = g.integer(1, 5); k > 0; --k) xs.push_back(random_sequence(g, 2, g.integer(1, 12)));
    std::vector<const Sequence*> ptrs;
    for (const auto& x : xs) ptrs.push_back(&x);
    std::vector<int> y;
    for (std::size_t i = 0; i < xs.size(); ++i) y.push_back(g.integer(0, 1));
    const BatchOutput batch = forward_batch(m, ptrs, false);
    const auto batched = per_sample_loss(batch.logits, y, LossSpec{});
    for (std::size_t i = 0; i < xs.size(); ++i) {
      Eigen::MatrixXd alone(2, 1);
      alone.col(0) = forward(m, xs[i]).logits;
      const std::vector<int> yi{y[i]};
      EXPECT_NEAR(batched[i], per_sample_loss(alone, yi, LossSpec{})[0], 1e-9);
    }
  });
}

// Independent route: central differences of the batch loss computed from
// forward(), compared against backward() on the batch tape.
double fd_max_rel_error(CellKind cell, int layers, std::uint64_t seed) {
  Gen g(seed);
  RecurrentModel m = RecurrentModel::initialize(spec_of(cell, 2, 4, layers), seed);
  std::vector<Sequence> xs{random_sequence(g, 2, 5), random_sequence(g, 2, 3)};
  const std::vector<int> y{1, 0};
  std::vector<const Sequence*> ptrs{&xs[0], &xs[1]};
  auto loss = [&](const RecurrentModel& model) {
    Eigen::MatrixXd logits(2, 2);
    for (int i = 0; i < 2; ++i) logits.col(i) = forward(model, xs[static_cast<std::size_t>(i)]).logits;
    return compute_loss(logits, y, LossSpec{});
  };
  ForwardTape tape;
  const BatchOutput out = forward_batch(m, ptrs, false, nullptr, &tape);
  Eigen::MatrixXd dlogits;
  loss_and_gradient(out.logits, y, LossSpec{}, dlogits);
  const std::vector<double> analytic = backward(m, tape, dlogits);
  double worst = 0.0;
  const double step = 1e-5;
  for (std::size_t i = 0; i < m.parameter_count(); ++i) {
    const double keep = m.parameters()[i];
    m.parameters()[i] = keep + step;
    const double up = loss(m);
    m.parameters()[i] = keep - step;
    const double down = loss(m);
    m.parameters()[i] = keep;
    const double numeric = (up - down) / (2 * step);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-6});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

TEST(GradientTest, IndependentFiniteDifferencesAgree) {
  for (CellKind cell : kCells) {
    for (int layers : {1, 2}) {
      EXPECT_LT(fd_max_rel_error(cell, layers, 5), 1e-4) << cell_name(cell) << " layers " << layers;
    }
  }
}

TEST(GradCheckTest, EveryCellPassesAtSmallScale) {
  for (CellKind cell : kCells) {
    for (int layers : {1, 2}) {
      for (std::uint64_t seed = 0; seed < 3; ++seed) {
        GradCheckOptions o;
        o.seed = seed;
        o.loss = seed == 2 ? LossKind::kFocal : LossKind::kWeightedCrossEntropy;
        const GradCheckReport r = grad_check(spec_of(cell, 2, 4, layers), o);
        EXPECT_TRUE(r.passed) << cell_name(cell) << " worst " << r.worst_tensor;
        EXPECT_LT(r.max_rel_error, 1e-4);
      }
    }
  }
}

TEST(GradCheckTest, DoubledTensorGradientIsCaught) {
  GradCheckOptions o;
  o.mutate_gradient = [](const RecurrentModel& m, std::vector<double>& grad) {
    const TensorInfo& t = m.tensors()[0];
    for (std::size_t i = t.offset; i < t.offset + t.size(); ++i) grad[i] *= 2.0;
  };
  try {
    grad_check(spec_of(CellKind::kLstm, 2, 4, 1), o);
    FAIL() << "expected GradMismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kGradMismatch);
    EXPECT_EQ(e.subject().rfind("layer0.weight", 0), 0u) << e.subject();
    EXPECT_GT(e.value(), 1e-4);
  }
}

TEST(GradCheckTest, RelativeErrorFloor) {
  EXPECT_EQ(gradient_relative_error(1e-9, 0.0), 1e-9 / kGradCheckFloor);
  EXPECT_EQ(gradient_relative_error(2.0, 1.0), 0.5);
}

TEST(EarlyStoppingTest, StrictlyWorseningStopsAtFour) {
  EarlyStopper s({3, 0.001});
  int epoch = 0;
  for (double loss = 1.0; !s.should_stop(); loss += 0.1) {
    s.update(loss);
    ++epoch;
  }
  EXPECT_EQ(epoch, 4);
  EXPECT_EQ(s.best_epoch(), 1);
}

TEST(EarlyStoppingTest, FitStopsAtOnePlusPatience) {
  std::vector<double> params{0.0};
  FitOptions o;
  o.batch_size = 1;
  double val = 1.0;
  const TrainHistory h = fit(
      params, 2, o,
      [](std::span<const std::size_t>, std::span<double> grad, std::mt19937_64&) {
        grad[0] = 1.0;
        return 0.5;
      },
      [&val] { return ValidationStats{val += 0.5, 0.5}; });
  EXPECT_EQ(h.stopped_epoch, 4);
  EXPECT_EQ(h.best_epoch, 1);
  EXPECT_EQ(h.val_loss.size(), 4u);
}

TEST(EarlyStoppingProperty, StopGapNeverExceedsPatience) {
  for_all(200, [](Gen& g) {
    EarlyStoppingConfig c{g.integer(1, 5), g.real(0, 0.01)};
    EarlyStopper s(c);
    const int max_epochs = g.integer(1, 30);
    for (int e = 0; e < max_epochs && !s.should_stop(); ++e) s.update(g.real(0, 1));
    EXPECT_LE(s.epoch() - s.best_epoch(), c.patience);
    EXPECT_GE(s.best_epoch(), 1);
  });
}

TEST(FitTest, NonFiniteLossIsDivergence) {
  std::vector<double> params{0.0};
  EXPECT_PHENO_ERROR(
      fit(params, 1, FitOptions{},
          [](std::span<const std::size_t>, std::span<double>, std::mt19937_64&) { return NAN; },
          [] { return ValidationStats{}; }),
      ErrorKind::kDivergenceDetected);
}

TEST(AdamTest, FirstStepMovesByLearningRate) {
  Adam adam(2, 0.1);
  std::vector<double> p{1.0, -1.0};
  const std::vector<double> g{3.0, -0.5};
  adam.step(p, g);
  EXPECT_NEAR(p[0], 0.9, 1e-8);
  EXPECT_NEAR(p[1], -0.9, 1e-8);
  EXPECT_EQ(adam.steps(), 1);
}

std::vector<LabeledSequence> constant_set(int n, int length, std::uint64_t seed) {
  Gen g(seed);
  std::vector<LabeledSequence> out;
  for (int i = 0; i < n; ++i) {
    const int label = i % 2;
    const double level = label == 1 ? g.real(0.7, 0.9) : g.real(0.1, 0.3);
    out.push_back({Sequence::Constant(2, g.integer(2, length), level), label});
  }
  return out;
}

TrainConfig toy_config() {
  TrainConfig c;
  c.batch_size = 8;
  c.learning_rate = 0.05;
  c.max_epochs = 5;
  c.seed = 3;
  return c;
}

TEST(TrainTest, SeparableToyLearnsQuickly) {
  const auto train_set = constant_set(40, 8, 1);
  const auto val_set = constant_set(20, 8, 2);
  const RecurrentModel init = RecurrentModel::initialize(spec_of(CellKind::kGru, 2, 8, 1), 9);
  const TrainResult r = train(init, train_set, val_set, toy_config());
  EXPECT_LT(*std::min_element(r.history.train_loss.begin(), r.history.train_loss.end()),
            std::numbers::ln2);
  const auto p = predict_all(r.model, val_set);
  for (std::size_t i = 0; i < val_set.size(); ++i) {
    EXPECT_EQ(p[i] >= 0.5 ? 1 : 0, val_set[i].label);
  }
}

TEST(TrainTest, SameSeedSameHistoryAndWeights) {
  const auto train_set = constant_set(24, 8, 4);
  const auto val_set = constant_set(10, 8, 5);
  const RecurrentModel init = RecurrentModel::initialize(spec_of(CellKind::kCnnLstm, 2, 4, 2, 0.2), 1);
  const TrainResult a = train(init, train_set, val_set, toy_config());
  const TrainResult b = train(init, train_set, val_set, toy_config());
  EXPECT_EQ(a.history, b.history);
  EXPECT_EQ(a.model.parameters(), b.model.parameters());
}

SearchSpace small_space() {
  SearchSpace s;
  s.cells = {CellKind::kGru};
  s.hidden_sizes = {8};
  s.batch_sizes = {8};
  s.min_layers = 1;
  s.max_layers = 1;
  s.min_dropout = 0;
  s.max_dropout = 0;
  s.min_weight_decay = 1e-8;
  s.max_weight_decay = 1e-8;
  s.losses = {LossKind::kWeightedCrossEntropy};
  s.max_epochs = 8;
  return s;
}

TEST(SearchTest, SingleTrialReturnsItsSampledConfig) {
  const auto train_set = constant_set(16, 6, 1);
  const auto val_set = constant_set(8, 6, 2);
  const SearchSpace space = small_space();
  const SearchResult r = random_search(space, 2, train_set, val_set, 1, 17);
  std::mt19937_64 rng(17);
  const TrialConfig expected = sample_trial(space, 2, rng);
  ASSERT_EQ(r.trials.size(), 1u);
  EXPECT_EQ(r.best_index, 0);
  EXPECT_EQ(r.best().config.spec, expected.spec);
  EXPECT_EQ(r.best().config.train.learning_rate, expected.train.learning_rate);
}

TEST(SearchTest, SameSeedSameTrialsAndWinnerAcrossJobs) {
  const auto train_set = constant_set(16, 6, 1);
  const auto val_set = constant_set(8, 6, 2);
  SearchSpace space = small_space();
  space.cells = {CellKind::kGru, CellKind::kLstm};
  space.max_epochs = 3;
  const SearchResult a = random_search(space, 2, train_set, val_set, 4, 5, 1);
  const SearchResult b = random_search(space, 2, train_set, val_set, 4, 5, 2);
  EXPECT_EQ(leaderboard_csv(a), leaderboard_csv(b));
  EXPECT_EQ(a.best_index, b.best_index);
  EXPECT_EQ(a.best_model->parameters(), b.best_model->parameters());
}

TEST(SearchTest, PlantedViableLearningRateWins) {
  const auto train_set = constant_set(32, 6, 7);
  const auto val_set = constant_set(16, 6, 8);
  SearchSpace space = small_space();
  space.learning_rate_choices = {1e-9, 0.05};
  const SearchResult r = random_search(space, 2, train_set, val_set, 6, 21);
  bool sampled_viable = false;
  for (const auto& t : r.trials) sampled_viable |= t.config.train.learning_rate == 0.05;
  ASSERT_TRUE(sampled_viable);
  EXPECT_EQ(r.best().config.train.learning_rate, 0.05);
  EXPECT_EQ(r.best().val_macro_f1, 1.0);
}

TEST(SearchProperty, SampledTrialsStayInsideTheSpace) {
  for_all(100, [](Gen& g) {
    const SearchSpace space;
    const TrialConfig t = sample_trial(space, 7, g.engine());
    EXPECT_GE(t.spec.num_layers, space.min_layers);
    EXPECT_LE(t.spec.num_layers, space.max_layers);
    EXPECT_GE(t.spec.dropout, space.min_dropout);
    EXPECT_LE(t.spec.dropout, space.max_dropout);
    EXPECT_GE(t.train.learning_rate, space.min_learning_rate);
    EXPECT_LE(t.train.learning_rate, space.max_learning_rate);
    EXPECT_GE(t.train.weight_decay, space.min_weight_decay);
    EXPECT_LE(t.train.weight_decay, space.max_weight_decay);
    EXPECT_NO_THROW(t.spec.validate());
  });
}

TEST(CheckpointTest, ModelRoundTripIsExact) {
  testing::TempDir dir("checkpoint");
  const RecurrentModel m = RecurrentModel::initialize(spec_of(CellKind::kCnnGru, 7, 8, 2, 0.1), 3);
  save_model(dir.path() / "m.json", m, {{"note", "x"}});
  nlohmann::json header;
  const RecurrentModel back = load_model(dir.path() / "m.json", &header);
  EXPECT_EQ(back.spec(), m.spec());
  EXPECT_EQ(back.parameters(), m.parameters());
  EXPECT_EQ(header.at("note"), "x");
}

}  // namespace
}  // namespace pheno
