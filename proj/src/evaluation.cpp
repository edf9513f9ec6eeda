#include "pheno/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "pheno/error.hpp"

namespace pheno {

using nlohmann::json;

void validate_scored(std::span<const ScoredSample> set) {
  std::set<std::string> seen;
  for (const auto& s : set) {
    if (!seen.insert(s.video_id).second) {
      throw Error(ErrorKind::kDuplicateVideoId, fmt::format("duplicate video_id '{}'", s.video_id),
                  s.video_id);
    }
    if (!std::isfinite(s.score) || s.score < 0.0 || s.score > 1.0) {
      throw Error(ErrorKind::kRangeViolation,
                  fmt::format("score for '{}' outside [0, 1]", s.video_id), "score", s.score);
    }
    if (s.label != 0 && s.label != 1) {
      throw Error(ErrorKind::kRangeViolation, fmt::format("label for '{}' not 0/1", s.video_id),
                  "label", s.label);
    }
  }
}

std::string scores_to_jsonl(std::span<const ScoredSample> set) {
  std::string out;
  for (const auto& s : set) {
    json j{{"video_id", s.video_id},
           {"score", s.score},
           {"label", s.label},
           {"gender", std::string(gender_name(s.gender))},
           {"age_group", std::string(age_group_name(s.age_group))}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

ScoredSet parse_scores(std::string_view text) {
  ScoredSet out;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      ScoredSample s;
      s.video_id = j.at("video_id").get<std::string>();
      s.score = j.at("score").get<double>();
      s.label = j.at("label").get<int>();
      s.gender = parse_gender(j.value("gender", "Other"));
      s.age_group = parse_age_group(j.value("age_group", "1-4"));
      out.push_back(std::move(s));
    } catch (const json::exception& e) {
      throw Error(ErrorKind::kParseError, fmt::format("scores line {}: {}", line_no, e.what()),
                  "line", line_no);
    }
  }
  validate_scored(out);
  return out;
}

void write_scores(const std::filesystem::path& path, std::span<const ScoredSample> set) {
  validate_scored(set);
  write_text_file(path, scores_to_jsonl(set));
}

ScoredSet load_scores(const std::filesystem::path& path) {
  return parse_scores(read_text_file(path));
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw Error(ErrorKind::kDimMismatch, "scores and labels differ in length");
  }
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double neg_below = 0, wins = 0, pos_total = 0, neg_total = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    double pos = 0, neg = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == 1 ? pos : neg) += 1;
      ++j;
    }
    wins += pos * neg_below + 0.5 * pos * neg;
    neg_below += neg;
    pos_total += pos;
    neg_total += neg;
    i = j;
  }
  if (pos_total == 0 || neg_total == 0) {
    throw Error(ErrorKind::kSingleClassSet, "AUC needs both classes");
  }
  return wins / (pos_total * neg_total);
}

double roc_auc(std::span<const ScoredSample> set) {
  std::vector<double> s;
  std::vector<int> y;
  for (const auto& x : set) {
    s.push_back(x.score);
    y.push_back(x.label);
  }
  return roc_auc(s, y);
}

Confusion confusion(std::span<const int> predicted, std::span<const int> labels) {
  Confusion c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool p = predicted[i] == 1;
    if (labels[i] == 1) {
      (p ? c.tp : c.fn) += 1;
    } else {
      (p ? c.fp : c.tn) += 1;
    }
  }
  return c;
}

Confusion confusion_at(std::span<const ScoredSample> set, double threshold) {
  Confusion c;
  for (const auto& s : set) {
    const bool p = s.score >= threshold;
    if (s.label == 1) {
      (p ? c.tp : c.fn) += 1;
    } else {
      (p ? c.fp : c.tn) += 1;
    }
  }
  return c;
}

namespace {

double ratio(double num, double den, const char* name, std::vector<std::string>& undefined) {
  if (den == 0) {
    undefined.emplace_back(name);
    return 0.0;
  }
  return num / den;
}

}  // namespace

MetricSet metrics_from_confusion(const Confusion& c) {
  MetricSet m;
  const double n = static_cast<double>(c.n());
  m.support = {c.tn + c.fp, c.tp + c.fn};
  m.accuracy = n > 0 ? static_cast<double>(c.tp + c.tn) / n : 0.0;
  const double tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp);
  const double tn = static_cast<double>(c.tn), fn = static_cast<double>(c.fn);
  m.precision[1] = ratio(tp, tp + fp, "precision_1", m.undefined);
  m.precision[0] = ratio(tn, tn + fn, "precision_0", m.undefined);
  m.recall[1] = ratio(tp, tp + fn, "recall_1", m.undefined);
  m.recall[0] = ratio(tn, tn + fp, "recall_0", m.undefined);
  for (int k = 0; k < 2; ++k) {
    const double pr = m.precision[k] + m.recall[k];
    m.f1[k] = pr > 0 ? 2.0 * m.precision[k] * m.recall[k] / pr : 0.0;
    if (pr == 0) m.undefined.push_back(fmt::format("f1_{}", k));
  }
  auto macro = [](const std::array<double, 2>& v) { return 0.5 * (v[0] + v[1]); };
  auto weighted = [&](const std::array<double, 2>& v) {
    return n > 0 ? (static_cast<double>(m.support[0]) * v[0] +
                    static_cast<double>(m.support[1]) * v[1]) /
                       n
                 : 0.0;
  };
  m.precision_macro = macro(m.precision);
  m.recall_macro = macro(m.recall);
  m.f1_macro = macro(m.f1);
  m.precision_weighted = weighted(m.precision);
  m.recall_weighted = weighted(m.recall);
  m.f1_weighted = weighted(m.f1);
  return m;
}

MetricSet classification_metrics(std::span<const ScoredSample> set, double threshold) {
  if (set.empty()) throw Error(ErrorKind::kEmptySplit, "cannot score an empty set");
  MetricSet m = metrics_from_confusion(confusion_at(set, threshold));
  m.threshold = threshold;
  if (m.support[0] > 0 && m.support[1] > 0) m.auc = roc_auc(set);
  return m;
}

double macro_f1(std::span<const int> predicted, std::span<const int> labels) {
  if (labels.empty()) return 0.0;
  return metrics_from_confusion(confusion(predicted, labels)).f1_macro;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw Error(ErrorKind::kEmptySplit, "percentile of an empty set");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  if (frac == 0.0) return values[lo];
  return values[lo] + frac * (values[hi] - values[lo]);
}

BootstrapResult bootstrap_ci(std::span<const ScoredSample> set, const MetricFn& metric,
                             int resamples, std::uint64_t seed, double level) {
  if (set.empty()) throw Error(ErrorKind::kEmptySplit, "cannot bootstrap an empty set");
  if (resamples < 1) throw Error(ErrorKind::kInvalidConfig, "resamples must be >= 1");
  bool has[2] = {false, false};
  for (const auto& s : set) has[s.label == 1] = true;
  const bool need_both = has[0] && has[1];

  BootstrapResult r;
  r.point = metric(set);
  r.resamples = resamples;
  std::vector<double> values(static_cast<std::size_t>(resamples));
  std::vector<ScoredSample> sample(set.size());
  std::uniform_int_distribution<std::size_t> pick(0, set.size() - 1);
  for (int i = 0; i < resamples; ++i) {
    std::mt19937_64 rng(seed + static_cast<std::uint64_t>(i));
    while (true) {
      bool got[2] = {false, false};
      for (auto& s : sample) {
        s = set[pick(rng)];
        got[s.label == 1] = true;
      }
      if (!need_both || (got[0] && got[1])) break;
      ++r.redrawn;
    }
    values[static_cast<std::size_t>(i)] = metric(sample);
  }
  const double tail = (1.0 - level) / 2.0;
  r.lower = percentile(values, tail);
  r.upper = percentile(values, 1.0 - tail);
  return r;
}

std::string_view grouping_name(Grouping g) {
  return g == Grouping::kAgeGroup ? "age_group" : "gender";
}

FairnessReport fairness_metrics(std::span<const ScoredSample> set, Grouping grouping,
                                double threshold, bool drop_other_gender) {
  FairnessReport report;
  report.grouping = grouping;
  std::vector<std::pair<std::string, std::vector<ScoredSample>>> buckets;
  if (grouping == Grouping::kAgeGroup) {
    for (AgeGroup a : kAllAgeGroups) buckets.emplace_back(std::string(age_group_name(a)), std::vector<ScoredSample>{});
    for (const auto& s : set) buckets[static_cast<std::size_t>(s.age_group)].second.push_back(s);
  } else {
    for (Gender g : kAllGenders) buckets.emplace_back(std::string(gender_name(g)), std::vector<ScoredSample>{});
    for (const auto& s : set) {
      if (drop_other_gender && s.gender == Gender::kOther) continue;
      buckets[static_cast<std::size_t>(s.gender)].second.push_back(s);
    }
  }
  std::vector<double> rates, tprs, fprs;
  for (auto& [name, samples] : buckets) {
    if (samples.empty()) continue;
    GroupStats g;
    g.group = name;
    g.n = static_cast<long>(samples.size());
    const Confusion c = confusion_at(samples, threshold);
    g.positive_rate = static_cast<double>(c.tp + c.fp) / static_cast<double>(c.n());
    if (c.tp + c.fn > 0) g.tpr = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    if (c.fp + c.tn > 0) g.fpr = static_cast<double>(c.fp) / static_cast<double>(c.fp + c.tn);
    g.metrics = classification_metrics(samples, threshold);
    rates.push_back(g.positive_rate);
    if (g.tpr) tprs.push_back(*g.tpr);
    if (g.fpr) fprs.push_back(*g.fpr);
    report.groups.push_back(std::move(g));
  }
  if (report.groups.size() < 2) {
    throw Error(ErrorKind::kInsufficientGroups,
                fmt::format("fairness by {} needs two non-empty groups", grouping_name(grouping)),
                std::string(grouping_name(grouping)), static_cast<double>(report.groups.size()));
  }
  auto spread = [](const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return *hi - *lo;
  };
  report.demographic_parity_difference = spread(rates);
  report.equalized_odds_difference = std::max(spread(tprs), spread(fprs));
  return report;
}

std::vector<double> default_threshold_grid() {
  std::vector<double> grid;
  for (int i = 0; i < 100; ++i) grid.push_back(i / 100.0);
  return grid;
}

double net_benefit(const Confusion& c, double pt) {
  const double n = static_cast<double>(c.n());
  return static_cast<double>(c.tp) / n - static_cast<double>(c.fp) / n * (pt / (1.0 - pt));
}

NetBenefitCurve net_benefit_curve(std::span<const ScoredSample> set,
                                  std::span<const double> thresholds) {
  if (set.empty()) throw Error(ErrorKind::kEmptySplit, "net benefit of an empty set");
  NetBenefitCurve curve;
  long positives = 0;
  for (const auto& s : set) positives += s.label == 1;
  const double n = static_cast<double>(set.size());
  curve.prevalence = static_cast<double>(positives) / n;
  for (double pt : thresholds) {
    if (!(pt >= 0.0 && pt < 1.0)) {
      throw Error(ErrorKind::kRangeViolation, "net-benefit threshold outside [0, 1)", "pt", pt);
    }
    const double w = pt / (1.0 - pt);
    curve.thresholds.push_back(pt);
    curve.model.push_back(net_benefit(confusion_at(set, pt), pt));
    curve.treat_all.push_back(curve.prevalence - (1.0 - curve.prevalence) * w);
    curve.treat_none.push_back(0.0);
  }
  return curve;
}

NetBenefitCurve net_benefit_curve(std::span<const ScoredSample> set) {
  const std::vector<double> grid = default_threshold_grid();
  return net_benefit_curve(set, grid);
}

std::vector<RocPoint> roc_curve(std::span<const ScoredSample> set) {
  std::vector<std::size_t> order(set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return set[a].score > set[b].score; });
  long pos = 0, neg = 0;
  for (const auto& s : set) (s.label == 1 ? pos : neg) += 1;
  if (pos == 0 || neg == 0) throw Error(ErrorKind::kSingleClassSet, "ROC needs both classes");
  // Integer vertices (fp, tp) keep the collinearity test exact.
  std::vector<std::pair<long, long>> v{{0, 0}};
  long tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && set[order[j]].score == set[order[i]].score) {
      (set[order[j]].label == 1 ? tp : fp) += 1;
      ++j;
    }
    while (v.size() >= 2) {
      const auto [x0, y0] = v[v.size() - 2];
      const auto [x1, y1] = v.back();
      if ((x1 - x0) * (tp - y1) - (y1 - y0) * (fp - x1) != 0) break;
      v.pop_back();
    }
    v.emplace_back(fp, tp);
    i = j;
  }
  std::vector<RocPoint> out;
  for (const auto& [x, y] : v) {
    out.push_back({static_cast<double>(x) / static_cast<double>(neg),
                   static_cast<double>(y) / static_cast<double>(pos)});
  }
  return out;
}

EvaluationReport evaluate(std::span<const ScoredSample> set, const EvaluationOptions& options,
                          std::string name) {
  validate_scored(set);
  EvaluationReport r;
  r.name = std::move(name);
  r.n = static_cast<long>(set.size());
  r.metrics = classification_metrics(set, options.threshold);
  r.net_benefit = net_benefit_curve(set);
  r.prevalence = r.net_benefit.prevalence;
  const double t = options.threshold;
  const std::vector<std::pair<std::string, MetricFn>> fns = {
      {"auc", [](std::span<const ScoredSample> s) { return roc_auc(s); }},
      {"accuracy", [t](auto s) { return classification_metrics(s, t).accuracy; }},
      {"recall_macro", [t](auto s) { return classification_metrics(s, t).recall_macro; }},
      {"recall_weighted", [t](auto s) { return classification_metrics(s, t).recall_weighted; }},
      {"precision_macro", [t](auto s) { return classification_metrics(s, t).precision_macro; }},
      {"precision_weighted",
       [t](auto s) { return classification_metrics(s, t).precision_weighted; }},
      {"f1_macro", [t](auto s) { return classification_metrics(s, t).f1_macro; }},
      {"f1_weighted", [t](auto s) { return classification_metrics(s, t).f1_weighted; }},
  };
  if (r.metrics.auc && options.resamples > 0) {
    for (const auto& [metric, fn] : fns) {
      r.intervals.push_back({metric, bootstrap_ci(set, fn, options.resamples, options.seed)});
    }
  }
  if (r.metrics.auc) r.roc = roc_curve(set);
  try {
    r.fairness_age = fairness_metrics(set, Grouping::kAgeGroup, t, options.drop_other_gender);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::kInsufficientGroups) throw;
  }
  try {
    r.fairness_gender = fairness_metrics(set, Grouping::kGender, t, options.drop_other_gender);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::kInsufficientGroups) throw;
  }
  return r;
}

namespace {

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json metric_set_json(const MetricSet& m) {
  return json{{"auc", optional_json(m.auc)},
              {"accuracy", m.accuracy},
              {"recall_macro", m.recall_macro},
              {"recall_weighted", m.recall_weighted},
              {"precision_macro", m.precision_macro},
              {"precision_weighted", m.precision_weighted},
              {"f1_macro", m.f1_macro},
              {"f1_weighted", m.f1_weighted},
              {"threshold", m.threshold},
              {"precision", m.precision},
              {"recall", m.recall},
              {"f1", m.f1},
              {"support", m.support},
              {"undefined", m.undefined}};
}

json fairness_json(const std::optional<FairnessReport>& f) {
  if (!f) return nullptr;
  json groups = json::array();
  for (const auto& g : f->groups) {
    groups.push_back({{"group", g.group},
                      {"n", g.n},
                      {"positive_rate", g.positive_rate},
                      {"tpr", optional_json(g.tpr)},
                      {"fpr", optional_json(g.fpr)},
                      {"metrics", metric_set_json(g.metrics)}});
  }
  return json{{"grouping", std::string(grouping_name(f->grouping))},
              {"groups", groups},
              {"demographic_parity_difference", f->demographic_parity_difference},
              {"equalized_odds_difference", f->equalized_odds_difference}};
}

std::string num(double v) { return fmt::format("{:.10g}", v); }
std::string num(const std::optional<double>& v) { return v ? num(*v) : std::string(); }

std::string fairness_csv(const FairnessReport& f, const MetricSet& overall) {
  std::string out = "group,n,Accuracy,Recall,Precision,ROC AUC,F1,positive_rate,TPR,FPR,DPD,EOD\n";
  for (const auto& g : f.groups) {
    const MetricSet& m = g.metrics;
    out += fmt::format("{},{},{},{},{},{},{},{},{},{},,\n", g.group, g.n, num(m.accuracy),
                       num(m.recall[1]), num(m.precision[1]), num(m.auc), num(m.f1[1]),
                       num(g.positive_rate), num(g.tpr), num(g.fpr));
  }
  long n = 0;
  for (const auto& g : f.groups) n += g.n;
  out += fmt::format("all,{},{},{},{},{},{},,,,{},{}\n", n, num(overall.accuracy),
                     num(overall.recall[1]), num(overall.precision[1]), num(overall.auc),
                     num(overall.f1[1]), num(f.demographic_parity_difference),
                     num(f.equalized_odds_difference));
  return out;
}

// A 400x300 line chart over the unit square; y may extend below 0.
std::string svg_plot(const std::string& title, const std::string& xlabel,
                     const std::string& ylabel,
                     const std::vector<std::pair<std::string, std::vector<RocPoint>>>& series,
                     double ymin, double ymax) {
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#7f7f7f"};
  const double left = 50, top = 30, width = 330, height = 230;
  auto sx = [&](double x) { return left + x * width; };
  auto sy = [&](double y) { return top + (ymax - y) / (ymax - ymin) * height; };
  std::string out =
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"400\" height=\"300\" "
      "viewBox=\"0 0 400 300\">\n";
  out += fmt::format("<text x=\"200\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">{}</text>\n",
                     title);
  out += fmt::format(
      "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n",
      left, top, width, height);
  out += fmt::format("<text x=\"{}\" y=\"292\" text-anchor=\"middle\" font-size=\"11\">{}</text>\n",
                     left + width / 2, xlabel);
  out += fmt::format(
      "<text x=\"12\" y=\"{}\" text-anchor=\"middle\" font-size=\"11\" "
      "transform=\"rotate(-90 12 {})\">{}</text>\n",
      top + height / 2, top + height / 2, ylabel);
  for (std::size_t k = 0; k < series.size(); ++k) {
    std::string pts;
    for (const auto& p : series[k].second) {
      const double y = std::clamp(p.tpr, ymin, ymax);
      pts += fmt::format("{:.2f},{:.2f} ", sx(p.fpr), sy(y));
    }
    out += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
                       kColors[k % 4], pts);
    out += fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"10\" fill=\"{}\">{}</text>\n",
                       left + 8, top + 14 + 12 * k, kColors[k % 4], series[k].first);
  }
  out += "</svg>\n";
  return out;
}

}  // namespace

json report_to_json(const EvaluationReport& r) {
  json intervals = json::object();
  for (const auto& i : r.intervals) {
    intervals[i.metric] = {{"point", i.ci.point},
                           {"lower", i.ci.lower},
                           {"upper", i.ci.upper},
                           {"resamples", i.ci.resamples},
                           {"redrawn", i.ci.redrawn}};
  }
  json roc = json::array();
  for (const auto& p : r.roc) roc.push_back({p.fpr, p.tpr});
  return json{{"name", r.name},
              {"n", r.n},
              {"prevalence", r.prevalence},
              {"metrics", metric_set_json(r.metrics)},
              {"confidence_intervals", intervals},
              {"fairness",
               {{"age_group", fairness_json(r.fairness_age)},
                {"gender", fairness_json(r.fairness_gender)}}},
              {"net_benefit",
               {{"thresholds", r.net_benefit.thresholds},
                {"model", r.net_benefit.model},
                {"treat_all", r.net_benefit.treat_all},
                {"treat_none", r.net_benefit.treat_none}}},
              {"roc", roc}};
}

void emit_report(const EvaluationReport& r, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    throw Error(ErrorKind::kIoError, fmt::format("cannot create {}: {}", dir.string(), ec.message()),
                dir.string());
  }
  write_text_file(dir / "metrics.json", report_to_json(r).dump(2) + "\n");

  std::string metrics = "metric,value,ci_lower,ci_upper\n";
  const MetricSet& m = r.metrics;
  const std::vector<std::pair<std::string, std::optional<double>>> rows = {
      {"auc", m.auc},
      {"accuracy", m.accuracy},
      {"recall_macro", m.recall_macro},
      {"recall_weighted", m.recall_weighted},
      {"precision_macro", m.precision_macro},
      {"precision_weighted", m.precision_weighted},
      {"f1_macro", m.f1_macro},
      {"f1_weighted", m.f1_weighted}};
  for (const auto& [name, value] : rows) {
    std::string lo, hi;
    for (const auto& i : r.intervals) {
      if (i.metric == name) {
        lo = num(i.ci.lower);
        hi = num(i.ci.upper);
      }
    }
    metrics += fmt::format("{},{},{},{}\n", name, num(value), lo, hi);
  }
  write_text_file(dir / "metrics.csv", metrics);

  for (const auto& [file, section] :
       {std::pair{"fairness_age.csv", &r.fairness_age},
        std::pair{"fairness_gender.csv", &r.fairness_gender}}) {
    if (*section) {
      write_text_file(dir / file, fairness_csv(**section, r.metrics));
    } else {
      std::filesystem::remove(dir / file, ec);
    }
  }

  std::string roc = "fpr,tpr\n";
  for (const auto& p : r.roc) roc += fmt::format("{},{}\n", num(p.fpr), num(p.tpr));
  write_text_file(dir / "roc.csv", roc);

  std::string nb = "threshold,model,treat_all,treat_none\n";
  const NetBenefitCurve& c = r.net_benefit;
  for (std::size_t i = 0; i < c.thresholds.size(); ++i) {
    nb += fmt::format("{},{},{},{}\n", num(c.thresholds[i]), num(c.model[i]),
                      num(c.treat_all[i]), num(c.treat_none[i]));
  }
  write_text_file(dir / "net_benefit.csv", nb);

  write_text_file(dir / "roc.svg",
                  svg_plot(fmt::format("ROC ({})", r.name), "false positive rate",
                           "true positive rate",
                           {{"model", r.roc}, {"chance", {{0, 0}, {1, 1}}}}, 0.0, 1.0));
  std::vector<RocPoint> model_pts, all_pts, none_pts;
  double ymax = 0.05;
  for (std::size_t i = 0; i < c.thresholds.size(); ++i) {
    model_pts.push_back({c.thresholds[i], c.model[i]});
    all_pts.push_back({c.thresholds[i], c.treat_all[i]});
    none_pts.push_back({c.thresholds[i], c.treat_none[i]});
    ymax = std::max({ymax, c.model[i], c.treat_all[i]});
  }
  write_text_file(dir / "net_benefit.svg",
                  svg_plot(fmt::format("Net benefit ({})", r.name), "threshold probability",
                           "net benefit",
                           {{"model", model_pts}, {"treat all", all_pts}, {"treat none", none_pts}},
                           -0.05, ymax * 1.05));
}

}  // namespace pheno
