#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pheno/core_data.hpp"

namespace pheno {

struct ScoredSample {
  std::string video_id;
  double score = 0.0;
  int label = 0;
  Gender gender = Gender::kOther;
  AgeGroup age_group = AgeGroup::k1To4;

  bool operator==(const ScoredSample&) const = default;
};

using ScoredSet = std::vector<ScoredSample>;

// Unique ids, finite scores in [0, 1], labels in {0, 1}.
void validate_scored(std::span<const ScoredSample> set);

std::string scores_to_jsonl(std::span<const ScoredSample> set);
ScoredSet parse_scores(std::string_view text);
void write_scores(const std::filesystem::path& path, std::span<const ScoredSample> set);
ScoredSet load_scores(const std::filesystem::path& path);

// Mann-Whitney pair count, ties worth one half. Throws SingleClassSet.
double roc_auc(std::span<const double> scores, std::span<const int> labels);
double roc_auc(std::span<const ScoredSample> set);

struct Confusion {
  long tp = 0, fp = 0, tn = 0, fn = 0;
  long n() const { return tp + fp + tn + fn; }
};

// Positive when score >= threshold.
Confusion confusion_at(std::span<const ScoredSample> set, double threshold);
Confusion confusion(std::span<const int> predicted, std::span<const int> labels);

struct MetricSet {
  std::optional<double> auc;  // empty when only one class is present
  double accuracy = 0.0;
  double recall_macro = 0.0;
  double recall_weighted = 0.0;
  double precision_macro = 0.0;
  double precision_weighted = 0.0;
  double f1_macro = 0.0;
  double f1_weighted = 0.0;
  double threshold = 0.5;
  // Index 0 is the negative class, 1 the positive class.
  std::array<double, 2> precision{0, 0};
  std::array<double, 2> recall{0, 0};
  std::array<double, 2> f1{0, 0};
  std::array<long, 2> support{0, 0};
  // Names of per-class ratios whose denominator was zero (reported as 0).
  std::vector<std::string> undefined;
};

MetricSet metrics_from_confusion(const Confusion& c);
MetricSet classification_metrics(std::span<const ScoredSample> set, double threshold = 0.5);
double macro_f1(std::span<const int> predicted, std::span<const int> labels);

// Linear interpolation between order statistics at position q * (n - 1).
double percentile(std::vector<double> values, double q);

struct BootstrapResult {
  double point = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  int resamples = 0;
  int redrawn = 0;  // draws discarded for lacking one of the classes
};

using MetricFn = std::function<double(std::span<const ScoredSample>)>;

// Video-level resampling with replacement; resample i draws from a generator
// seeded with seed + i and redraws while the sample lacks a class (only when
// the input itself has both classes).
BootstrapResult bootstrap_ci(std::span<const ScoredSample> set, const MetricFn& metric,
                             int resamples = 1000, std::uint64_t seed = 0, double level = 0.95);

enum class Grouping { kAgeGroup, kGender };

std::string_view grouping_name(Grouping g);

struct GroupStats {
  std::string group;
  long n = 0;
  double positive_rate = 0.0;
  std::optional<double> tpr;  // empty without positives
  std::optional<double> fpr;  // empty without negatives
  MetricSet metrics;
};

struct FairnessReport {
  Grouping grouping = Grouping::kGender;
  std::vector<GroupStats> groups;
  double demographic_parity_difference = 0.0;
  double equalized_odds_difference = 0.0;
};

// Gender Other is dropped when `drop_other_gender`. Spreads of TPR and FPR are
// taken over the groups where each is defined. Throws InsufficientGroups when
// fewer than two groups remain.
FairnessReport fairness_metrics(std::span<const ScoredSample> set, Grouping grouping,
                                double threshold = 0.5, bool drop_other_gender = true);

struct NetBenefitCurve {
  std::vector<double> thresholds;
  std::vector<double> model;
  std::vector<double> treat_all;
  std::vector<double> treat_none;
  double prevalence = 0.0;
};

// 0, 0.01, ..., 0.99.
std::vector<double> default_threshold_grid();
double net_benefit(const Confusion& c, double pt);
NetBenefitCurve net_benefit_curve(std::span<const ScoredSample> set,
                                  std::span<const double> thresholds);
NetBenefitCurve net_benefit_curve(std::span<const ScoredSample> set);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  bool operator==(const RocPoint&) const = default;
};

// Vertices of the empirical ROC polyline from (0, 0) to (1, 1); collinear
// intermediate points are dropped.
std::vector<RocPoint> roc_curve(std::span<const ScoredSample> set);

struct MetricInterval {
  std::string metric;
  BootstrapResult ci;
};

struct EvaluationOptions {
  double threshold = 0.5;
  int resamples = 1000;
  std::uint64_t seed = 0;
  bool drop_other_gender = true;
};

struct EvaluationReport {
  std::string name;
  long n = 0;
  double prevalence = 0.0;
  MetricSet metrics;
  std::vector<MetricInterval> intervals;
  std::optional<FairnessReport> fairness_age;
  std::optional<FairnessReport> fairness_gender;
  NetBenefitCurve net_benefit;
  std::vector<RocPoint> roc;
};

// Fairness sections are empty when InsufficientGroups applies.
EvaluationReport evaluate(std::span<const ScoredSample> set, const EvaluationOptions& options,
                          std::string name = "model");

nlohmann::json report_to_json(const EvaluationReport& report);

// metrics.json, metrics.csv, fairness_age.csv, fairness_gender.csv, roc.csv,
// net_benefit.csv, roc.svg, net_benefit.svg. A missing fairness section is
// null in the JSON and has no CSV. Throws IoError.
void emit_report(const EvaluationReport& report, const std::filesystem::path& dir);

}  // namespace pheno
