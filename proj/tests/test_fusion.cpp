#include <algorithm>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "pheno/error.hpp"
#include "pheno/fusion.hpp"
#include "pheno/losses.hpp"
#include "test_support.hpp"

namespace pheno {
namespace {

using testing::Gen;
using testing::for_all;

const std::vector<Modality> kTriple{Modality::kEye, Modality::kHead, Modality::kFace};

// Logit column whose softmax gives probability p for label 1.
Eigen::Vector2d logits_for(double p) { return {0.0, std::log(p / (1.0 - p))}; }

FusionInput random_input(Gen& g, std::vector<Modality> subset, int n, std::vector<int> hidden = {}) {
  FusionInput in;
  in.subset = std::move(subset);
  for (std::size_t m = 0; m < in.subset.size(); ++m) {
    Eigen::MatrixXd z(2, n);
    for (int i = 0; i < n; ++i) z.col(i) = Eigen::Vector2d(g.real(-4, 4), g.real(-4, 4));
    in.logits.push_back(z);
    if (!hidden.empty()) {
      Eigen::MatrixXd h(hidden[m], n);
      for (int i = 0; i < n; ++i) {
        for (int r = 0; r < hidden[m]; ++r) h(r, i) = g.real(-1, 1);
      }
      in.hidden.push_back(h);
    }
  }
  return in;
}

TEST(FuseAverageTest, Examples) {
  const std::vector<double> three{0.9, 0.6, 0.3};
  EXPECT_NEAR(fuse_average(three), 0.6, 1e-15);
  const std::vector<double> one{0.42};
  EXPECT_EQ(fuse_average(one), 0.42);
  const std::vector<double> two{0.0, 1.0};
  EXPECT_EQ(fuse_average(two), 0.5);
  EXPECT_PHENO_ERROR(fuse_average(std::vector<double>{}), ErrorKind::kEmptySubset);
}

TEST(FuseAverageProperty, PermutationInvariantAndBounded) {
  for_all(200, [](Gen& g) {
    std::vector<double> p;
    for (int k = g.integer(1, 3); k > 0; --k) p.push_back(g.real(0, 1));
    const double fused = fuse_average(p);
    EXPECT_GE(fused, *std::min_element(p.begin(), p.end()));
    EXPECT_LE(fused, *std::max_element(p.begin(), p.end()));
    std::vector<double> q = p;
    std::shuffle(q.begin(), q.end(), g.engine());
    EXPECT_NEAR(fuse_average(q), fused, 1e-15);
  });
}

TEST(FusePredictTest, AverageOfEqualProbabilities) {
  FusionInput in;
  in.subset = kTriple;
  for (int m = 0; m < 3; ++m) {
    Eigen::MatrixXd z(2, 1);
    z.col(0) = logits_for(0.2);
    in.logits.push_back(z);
  }
  EXPECT_NEAR(fuse_predict(average_head(kTriple), in)[0], 0.2, 1e-15);
}

TEST(FusePredictTest, ZeroLateLinearHeadGivesHalf) {
  Gen g(1);
  FusionHead head;
  head.scheme = FusionScheme::kLateLinear;
  head.subset = kTriple;
  head.net = Mlp({6, 2});
  for (double p : fuse_predict(head, random_input(g, kTriple, 5))) EXPECT_EQ(p, 0.5);
}

TEST(FusePredictTest, SubsetMismatchIsRejected) {
  Gen g(2);
  const FusionInput in = random_input(g, {Modality::kEye, Modality::kFace}, 3);
  EXPECT_PHENO_ERROR(fuse_predict(average_head(kTriple), in), ErrorKind::kSchemeMismatch);
  EXPECT_NO_THROW(fuse_predict(average_head({Modality::kEye, Modality::kFace}), in));
}

TEST(SubsetTest, ParseKeepsOrderAndRejectsDuplicates) {
  EXPECT_EQ(parse_subset("eye,face"), (std::vector<Modality>{Modality::kEye, Modality::kFace}));
  EXPECT_PHENO_ERROR(parse_subset("eye,eye"), ErrorKind::kConfigError);
  EXPECT_PHENO_ERROR(parse_subset(""), ErrorKind::kEmptySubset);
}

TEST(LateLinearProperty, AveragingWeightsReproduceLogitAveraging) {
  for_all(50, [](Gen& g) {
    const int k = g.integer(1, 3);
    const std::vector<Modality> subset(kTriple.begin(), kTriple.begin() + k);
    const FusionInput in = random_input(g, subset, 7);
    FusionHead head;
    head.scheme = FusionScheme::kLateLinear;
    head.subset = subset;
    head.net = Mlp({2 * k, 2});
    Eigen::Map<Eigen::MatrixXd> w(head.net.parameters().data(), 2, 2 * k);
    for (int m = 0; m < k; ++m) {
      w(0, 2 * m) = 1.0 / k;
      w(1, 2 * m + 1) = 1.0 / k;
    }
    const auto fused = fuse_predict(head, in);
    for (int i = 0; i < 7; ++i) {
      std::vector<Eigen::Vector2d> zs;
      for (int m = 0; m < k; ++m) zs.push_back(in.logits[static_cast<std::size_t>(m)].col(i));
      EXPECT_NEAR(fused[static_cast<std::size_t>(i)], fuse_average_logits(zs), 1e-12);
      EXPECT_GE(fused[static_cast<std::size_t>(i)], 0.0);
      EXPECT_LE(fused[static_cast<std::size_t>(i)], 1.0);
    }
  });
}

FusionTrainConfig quick_config() {
  FusionTrainConfig c;
  c.batch_size = 8;
  c.learning_rate = 0.01;
  c.max_epochs = 20;
  c.seed = 4;
  c.hidden_sizes = {16, 8};
  return c;
}

TEST(LateLinearTest, ThreeModalitiesGiveWidthSix) {
  Gen g(3);
  const FusionInput in = random_input(g, kTriple, 10);
  const std::vector<int> y{0, 1, 0, 1, 0, 1, 0, 1, 0, 1};
  const FusionTrainResult r = train_late_linear(in, y, in, y, quick_config());
  EXPECT_EQ(r.head.net.input_width(), 6);
  EXPECT_EQ(fusion_features(FusionScheme::kLateLinear, in).rows(), 6);
}

TEST(LateLinearTest, SeparatingModalityReachesPerfectTrainAccuracy) {
  Gen g(5);
  FusionInput in = random_input(g, kTriple, 40);
  std::vector<int> y;
  for (int i = 0; i < 40; ++i) {
    y.push_back(i % 2);
    in.logits[0].col(i) = logits_for(i % 2 == 1 ? g.real(0.6, 0.95) : g.real(0.05, 0.4));
  }
  const FusionTrainResult r = train_late_linear(in, y, in, y, quick_config());
  const auto p = fuse_predict(r.head, in);
  for (int i = 0; i < 40; ++i) EXPECT_EQ(p[static_cast<std::size_t>(i)] >= 0.5 ? 1 : 0, y[static_cast<std::size_t>(i)]);
}

TEST(LateLinearTest, SameInputsSameWeights) {
  Gen g(6);
  const FusionInput in = random_input(g, kTriple, 16);
  std::vector<int> y;
  for (int i = 0; i < 16; ++i) y.push_back(g.integer(0, 1));
  const auto a = train_late_linear(in, y, in, y, quick_config());
  const auto b = train_late_linear(in, y, in, y, quick_config());
  EXPECT_EQ(a.head.net.parameters(), b.head.net.parameters());
  EXPECT_EQ(a.history, b.history);
}

TEST(IntermediateTest, TableSizedHiddenStatesGiveWidth144) {
  Gen g(7);
  const FusionInput in = random_input(g, kTriple, 8, {64, 32, 48});
  const std::vector<int> y{0, 1, 0, 1, 0, 1, 0, 1};
  FusionTrainConfig c = quick_config();
  c.hidden_sizes = {256, 32, 64};
  c.max_epochs = 2;
  const FusionTrainResult r = train_intermediate(in, y, in, y, c);
  EXPECT_EQ(r.head.net.input_width(), 144);
  EXPECT_EQ(r.head.net.widths(), (std::vector<int>{144, 256, 32, 64, 2}));
  c.hidden_sizes = {0, 32, 64};
  EXPECT_PHENO_ERROR(train_intermediate(in, y, in, y, c), ErrorKind::kDimMismatch);
}

TEST(IntermediateTest, SingleClassTargetPredictedEverywhere) {
  Gen g(8);
  const FusionInput in = random_input(g, {Modality::kEye, Modality::kFace}, 12, {4, 4});
  const std::vector<int> y(12, 1);
  const FusionTrainResult r = train_intermediate(in, y, in, y, quick_config());
  for (double p : fuse_predict(r.head, in)) EXPECT_GE(p, 0.5);
}

TEST(MlpTest, BackwardMatchesFiniteDifferences) {
  Gen g(9);
  Mlp net = Mlp::initialize({5, 4, 3, 2}, 2);
  Eigen::MatrixXd x(5, 3);
  for (int i = 0; i < x.size(); ++i) x.data()[i] = g.real(-1, 1);
  Eigen::MatrixXd dl(2, 3);
  for (int i = 0; i < dl.size(); ++i) dl.data()[i] = g.real(-1, 1);
  const auto grad = net.backward(x, dl);
  for (std::size_t i = 0; i < net.parameters().size(); ++i) {
    const double keep = net.parameters()[i];
    net.parameters()[i] = keep + 1e-6;
    const double up = (dl.array() * net.forward(x).array()).sum();
    net.parameters()[i] = keep - 1e-6;
    const double down = (dl.array() * net.forward(x).array()).sum();
    net.parameters()[i] = keep;
    EXPECT_NEAR(grad[i], (up - down) / 2e-6, 1e-6);
  }
}

TEST(FusionIoTest, HeadRoundTrip) {
  testing::TempDir dir("fusion_io");
  FusionHead head;
  head.scheme = FusionScheme::kIntermediate;
  head.subset = {Modality::kEye, Modality::kFace};
  head.net = Mlp::initialize({12, 8, 2}, 1);
  save_fusion_head(dir.path() / "head.json", head);
  const FusionHead back = load_fusion_head(dir.path() / "head.json");
  EXPECT_EQ(back.scheme, head.scheme);
  EXPECT_EQ(back.subset, head.subset);
  EXPECT_EQ(back.net.widths(), head.net.widths());
  EXPECT_EQ(back.net.parameters(), head.net.parameters());
}

}  // namespace
}  // namespace pheno
