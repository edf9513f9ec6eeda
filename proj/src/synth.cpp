#include "pheno/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <fmt/format.h>

#include "pheno/error.hpp"

namespace pheno {

using nlohmann::json;

void SynthConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorKind::kInvalidConfig, what); };
  auto unit = [&](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) fail(fmt::format("{} must lie in [0, 1]", name));
  };
  if (n_children_per_class < 1) fail("n_children_per_class must be >= 1");
  if (videos_per_child_min < 1 || videos_per_child_max < videos_per_child_min) {
    fail("videos per child range must satisfy 1 <= min <= max");
  }
  if (superuser_videos_min < 1 || superuser_videos_max < superuser_videos_min) {
    fail("superuser video range must satisfy 1 <= min <= max");
  }
  unit(superuser_fraction, "superuser_fraction");
  unit(delta_eye, "delta_eye");
  unit(delta_head, "delta_head");
  unit(delta_face, "delta_face");
  if (!(rate_base > 0) || !(rate_max >= rate_base)) fail("rates must satisfy 0 < base <= max");
  if (!(rate_jitter >= 0)) fail("rate_jitter must be >= 0");
  if (!(fps > 0)) fail("fps must be > 0");
  if (!(duration_min_seconds > 0) || duration_max_seconds < duration_min_seconds) {
    fail("duration range must satisfy 0 < min <= max");
  }
  if (!(missing_fraction >= 0.0 && missing_fraction < 1.0)) fail("missing_fraction must lie in [0, 1)");
  if (!(mean_burst_seconds > 0)) fail("mean_burst_seconds must be > 0");
  unit(edge_gap_prob, "edge_gap_prob");
  if (!(edge_gap_max_seconds >= 0)) fail("edge_gap_max_seconds must be >= 0");
  if (class_correlated_missingness &&
      !(missing_fraction + class_missing_shift >= 0.0 && missing_fraction + class_missing_shift < 1.0)) {
    fail("missing_fraction + class_missing_shift must lie in [0, 1)");
  }
  for (const auto* w : {&gender_weights, &age_weights, &location_weights}) {
    double sum = 0;
    for (double v : *w) {
      if (!(v >= 0)) fail("sampling weights must be >= 0");
      sum += v;
    }
    if (!(sum > 0)) fail("sampling weights must not all be zero");
  }
  double total = 0;
  for (const auto& [name, share] : quality_failures) {
    if (std::find_if(kCriterionOrder.begin(), kCriterionOrder.end(),
                     [&](const char* c) { return name == c; }) == kCriterionOrder.end()) {
      fail(fmt::format("unknown quality criterion '{}'", name));
    }
    unit(share, "quality failure share");
    total += share;
  }
  if (total > 1.0) fail("quality failure shares sum above 1");
  criteria.validate();
}

json synth_config_to_json(const SynthConfig& c) {
  return json{{"n_children_per_class", c.n_children_per_class},
              {"videos_per_child", {c.videos_per_child_min, c.videos_per_child_max}},
              {"superuser_fraction", c.superuser_fraction},
              {"superuser_videos", {c.superuser_videos_min, c.superuser_videos_max}},
              {"delta_eye", c.delta_eye},
              {"delta_head", c.delta_head},
              {"delta_face", c.delta_face},
              {"rate_base", c.rate_base},
              {"rate_max", c.rate_max},
              {"rate_jitter", c.rate_jitter},
              {"fps", c.fps},
              {"duration_seconds", {c.duration_min_seconds, c.duration_max_seconds}},
              {"missing_fraction", c.missing_fraction},
              {"mean_burst_seconds", c.mean_burst_seconds},
              {"edge_gap_prob", c.edge_gap_prob},
              {"edge_gap_max_seconds", c.edge_gap_max_seconds},
              {"class_correlated_missingness", c.class_correlated_missingness},
              {"class_missing_shift", c.class_missing_shift},
              {"gender_weights", c.gender_weights},
              {"age_weights", c.age_weights},
              {"location_weights", c.location_weights},
              {"quality_failures", c.quality_failures},
              {"criteria", criteria_to_json(c.criteria)},
              {"seed", c.seed}};
}

SynthConfig synth_config_from_json(const json& j) {
  SynthConfig c;
  try {
    c.n_children_per_class = j.value("n_children_per_class", c.n_children_per_class);
    if (j.contains("videos_per_child")) {
      c.videos_per_child_min = j.at("videos_per_child").at(0).get<int>();
      c.videos_per_child_max = j.at("videos_per_child").at(1).get<int>();
    }
    c.superuser_fraction = j.value("superuser_fraction", c.superuser_fraction);
    if (j.contains("superuser_videos")) {
      c.superuser_videos_min = j.at("superuser_videos").at(0).get<int>();
      c.superuser_videos_max = j.at("superuser_videos").at(1).get<int>();
    }
    c.delta_eye = j.value("delta_eye", c.delta_eye);
    c.delta_head = j.value("delta_head", c.delta_head);
    c.delta_face = j.value("delta_face", c.delta_face);
    c.rate_base = j.value("rate_base", c.rate_base);
    c.rate_max = j.value("rate_max", c.rate_max);
    c.rate_jitter = j.value("rate_jitter", c.rate_jitter);
    c.fps = j.value("fps", c.fps);
    if (j.contains("duration_seconds")) {
      c.duration_min_seconds = j.at("duration_seconds").at(0).get<double>();
      c.duration_max_seconds = j.at("duration_seconds").at(1).get<double>();
    }
    c.missing_fraction = j.value("missing_fraction", c.missing_fraction);
    c.mean_burst_seconds = j.value("mean_burst_seconds", c.mean_burst_seconds);
    c.edge_gap_prob = j.value("edge_gap_prob", c.edge_gap_prob);
    c.edge_gap_max_seconds = j.value("edge_gap_max_seconds", c.edge_gap_max_seconds);
    c.class_correlated_missingness =
        j.value("class_correlated_missingness", c.class_correlated_missingness);
    c.class_missing_shift = j.value("class_missing_shift", c.class_missing_shift);
    c.gender_weights = j.value("gender_weights", c.gender_weights);
    c.age_weights = j.value("age_weights", c.age_weights);
    c.location_weights = j.value("location_weights", c.location_weights);
    c.quality_failures = j.value("quality_failures", c.quality_failures);
    if (j.contains("criteria")) c.criteria = criteria_from_json(j.at("criteria"));
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kInvalidConfig, fmt::format("bad synth config: {}", e.what()));
  }
  c.validate();
  return c;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double round4(double v) { return std::round(v * 1e4) / 1e4; }

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

double normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

template <std::size_t N>
std::size_t weighted_pick(Rng& rng, const std::array<double, N>& w) {
  return std::discrete_distribution<std::size_t>(w.begin(), w.end())(rng);
}

// Stationary AR(1) discretisation of an Ornstein-Uhlenbeck process.
class Ou {
 public:
  Ou(double mean, double stddev, double rate, double fps, Rng& rng)
      : mean_(mean), sd_(stddev), phi_(std::exp(-rate / fps)),
        x_(mean + stddev * normal(rng)) {}

  double step(Rng& rng) {
    x_ = mean_ + phi_ * (x_ - mean_) + std::sqrt(1.0 - phi_ * phi_) * sd_ * normal(rng);
    return x_;
  }
  double value() const { return x_; }

 private:
  double mean_, sd_, phi_, x_;
};

double class_rate(const SynthConfig& c, double delta, int label, Rng& rng) {
  const double base = label == 1 ? c.rate_base * std::pow(c.rate_max / c.rate_base, delta)
                                 : c.rate_base;
  return base * std::exp(c.rate_jitter * normal(rng));
}

// Stationary spread relative to the base rate; faster reversion comes with
// wider, rougher excursions around an unchanged mean.
double spread(const SynthConfig& c, double rate) { return std::sqrt(rate / c.rate_base); }

std::vector<bool> missing_mask(const SynthConfig& c, int label, std::size_t frames, Rng& rng) {
  double f = c.missing_fraction;
  if (c.class_correlated_missingness && label == 1) f += c.class_missing_shift;
  const double burst = std::max(1.0, c.mean_burst_seconds * c.fps);
  const double leave = 1.0 / burst;
  const double enter = f > 0 ? f / (burst * (1.0 - f)) : 0.0;
  std::vector<bool> mask(frames, false);
  bool missing = uniform(rng, 0, 1) < f;
  for (std::size_t t = 0; t < frames; ++t) {
    mask[t] = missing;
    const double u = uniform(rng, 0, 1);
    missing = missing ? !(u < leave) : u < enter;
  }
  const auto edge = [&]() {
    return static_cast<std::size_t>(std::lround(uniform(rng, 0, c.edge_gap_max_seconds) * c.fps));
  };
  if (uniform(rng, 0, 1) < c.edge_gap_prob) {
    const std::size_t n = std::min(frames, edge());
    std::fill(mask.begin(), mask.begin() + static_cast<long>(n), true);
  }
  if (uniform(rng, 0, 1) < c.edge_gap_prob) {
    const std::size_t n = std::min(frames, edge());
    std::fill(mask.end() - static_cast<long>(n), mask.end(), true);
  }
  return mask;
}

// Fixed 30-point face template in unit box coordinates.
std::vector<std::array<double, 2>> face_template() {
  std::vector<std::array<double, 2>> pts;
  for (int i = 0; i < 14; ++i) {  // outline
    const double a = std::numbers::pi * (0.1 + 0.8 * i / 13.0);
    pts.push_back({0.5 - 0.45 * std::cos(a), 0.35 + 0.6 * std::sin(a)});
  }
  for (int side = 0; side < 2; ++side) {  // eyes
    for (int i = 0; i < 4; ++i) {
      const double a = 2 * std::numbers::pi * i / 4.0;
      pts.push_back({0.3 + 0.4 * side + 0.07 * std::cos(a), 0.4 + 0.03 * std::sin(a)});
    }
  }
  for (int i = 0; i < 3; ++i) pts.push_back({0.5, 0.45 + 0.08 * i});  // nose
  for (int i = 0; i < 5; ++i) {  // mouth
    const double a = 2 * std::numbers::pi * i / 5.0;
    pts.push_back({0.5 + 0.12 * std::cos(a), 0.78 + 0.04 * std::sin(a)});
  }
  return pts;
}

// Fixed loadings of three expression factors onto 60 landmark coordinates.
std::vector<std::array<double, 3>> face_loadings() {
  Rng rng(0x5eed);
  std::vector<std::array<double, 3>> l(60);
  for (auto& row : l) {
    for (double& v : row) v = normal(rng);
  }
  return l;
}

VideoFeatureSeries generate_series(const SynthConfig& c, const std::string& video_id, int label,
                                   Rng& rng) {
  const double seconds = uniform(rng, c.duration_min_seconds, c.duration_max_seconds);
  const auto frames = static_cast<std::size_t>(std::max(1.0, std::round(seconds * c.fps)));
  const std::vector<bool> mask = missing_mask(c, label, frames, rng);

  const double eye_rate = class_rate(c, c.delta_eye, label, rng);
  const double eye_spread = spread(c, eye_rate);
  Ou yaw(uniform(rng, -15, 15), 30.0 * eye_spread, eye_rate, c.fps, rng);
  Ou pitch(uniform(rng, -10, 10), 18.0 * eye_spread, eye_rate, c.fps, rng);

  const double head_rate = class_rate(c, c.delta_head, label, rng);
  const double head_spread = spread(c, head_rate);
  Ou h_pitch(uniform(rng, -8, 8), 20.0 * head_spread, head_rate, c.fps, rng);
  Ou h_roll(uniform(rng, -5, 5), 12.0 * head_spread, head_rate, c.fps, rng);
  Ou h_yaw(uniform(rng, -8, 8), 25.0 * head_spread, head_rate, c.fps, rng);
  Ou box_w(uniform(rng, 0.25, 0.35), 0.02, 0.05, c.fps, rng);
  Ou box_left(uniform(rng, 0.25, 0.4), 0.04, 0.1, c.fps, rng);
  Ou box_top(uniform(rng, 0.15, 0.3), 0.03, 0.1, c.fps, rng);

  const double face_rate = class_rate(c, c.delta_face, label, rng);
  std::vector<Ou> expression;
  const double face_spread = spread(c, face_rate);
  for (int k = 0; k < 3; ++k) expression.emplace_back(0.0, face_spread, face_rate, c.fps, rng);
  static const std::vector<std::array<double, 2>> kTemplate = face_template();
  static const std::vector<std::array<double, 3>> kLoadings = face_loadings();

  VideoFeatureSeries s;
  s.video_id = video_id;
  s.fps = c.fps;
  s.frames.resize(frames);
  auto clamp01 = [](double v) { return round4(std::clamp(v, 0.0, 1.0)); };
  auto angle = [](double v) { return round4(std::clamp(v, -180.0, 180.0)); };
  for (std::size_t t = 0; t < frames; ++t) {
    // Every process advances on every frame so the mask never shifts the signal.
    const double ey = yaw.step(rng) + 0.5 * normal(rng);
    const double ep = pitch.step(rng) + 0.5 * normal(rng);
    const double hp = h_pitch.step(rng), hr = h_roll.step(rng), hy = h_yaw.step(rng);
    const double w = box_w.step(rng), left = box_left.step(rng), top = box_top.step(rng);
    std::array<double, 3> z{};
    for (int k = 0; k < 3; ++k) z[k] = expression[k].step(rng);
    std::array<double, 3> conf{round4(uniform(rng, 85, 100)), round4(uniform(rng, 85, 100)),
                               round4(uniform(rng, 85, 100))};
    FrameFeatures& f = s.frames[t];
    f.frame_index = static_cast<std::int64_t>(t);
    if (mask[t]) continue;
    const double h = 1.2 * w;
    f.get(Modality::kEye) = FeatureVector{angle(ey), angle(ep)};
    f.get(Modality::kHead) =
        FeatureVector{clamp01(w), clamp01(h), clamp01(left), clamp01(top), angle(hp), angle(hr),
                      angle(hy)};
    FeatureVector face(60);
    for (std::size_t p = 0; p < kTemplate.size(); ++p) {
      for (int axis = 0; axis < 2; ++axis) {
        const std::size_t k = 2 * p + axis;
        const auto& l = kLoadings[k];
        const double jitter = 0.02 * (l[0] * z[0] + l[1] * z[1] + l[2] * z[2]);
        const double base = axis == 0 ? left + w * kTemplate[p][0] : top + h * kTemplate[p][1];
        face[k] = clamp01(base + jitter + 0.001 * normal(rng));
      }
    }
    f.get(Modality::kFace) = std::move(face);
    f.confidence = conf;
  }
  return s;
}

QualityStats passing_quality(Rng& rng) {
  QualityStats q;
  q.sharpness = round4(uniform(rng, 10, 90));
  q.brightness = round4(uniform(rng, 30, 90));
  q.no_face_prop = round4(uniform(rng, 0, 0.4));
  q.multiface_prop = round4(uniform(rng, 0, 0.2));
  q.face_size = round4(uniform(rng, 1, 30));
  q.eyes_open_prop = round4(uniform(rng, 0.8, 1.0));
  q.median_head_pitch = round4(uniform(rng, -30, 30));
  q.median_head_roll = round4(uniform(rng, -30, 30));
  q.median_head_yaw = round4(uniform(rng, -30, 30));
  q.eye_confidence = round4(uniform(rng, 85, 100));
  return q;
}

// Moves one field past its threshold with a margin of at least 10%.
void sabotage_quality(QualityStats& q, const std::string& criterion, const FilterCriteria& c,
                      Rng& rng) {
  auto below = [&](double threshold, double lo) {
    return round4(uniform(rng, lo, std::max(lo, threshold * 0.9)));
  };
  auto above = [&](double threshold, double hi) {
    return round4(uniform(rng, std::min(hi, threshold + 0.1 * (hi - threshold)), hi));
  };
  auto tilt = [&]() {
    const double mag = uniform(rng, std::min(179.0, c.head_angle_abs_max + 5.0), 180.0);
    return round4(uniform(rng, 0, 1) < 0.5 ? -mag : mag);
  };
  if (criterion == "sharpness") q.sharpness = below(c.sharpness_min, 0);
  else if (criterion == "brightness") q.brightness = below(c.brightness_min, 0);
  else if (criterion == "no_face") q.no_face_prop = above(c.no_face_prop_max, 1);
  else if (criterion == "multiface") q.multiface_prop = above(c.multiface_prop_max, 1);
  else if (criterion == "face_size") q.face_size = below(c.face_size_min, 0);
  else if (criterion == "pitch") q.median_head_pitch = tilt();
  else if (criterion == "roll") q.median_head_roll = tilt();
  else if (criterion == "yaw") q.median_head_yaw = tilt();
  else if (criterion == "eye_confidence") q.eye_confidence = below(c.eye_confidence_min, 0);
  else if (criterion == "eyes_open") q.eyes_open_prop = below(c.eyes_open_prop_min, 0);
}

}  // namespace

SynthCohort generate_cohort(const SynthConfig& config) {
  config.validate();
  Rng rng(config.seed);
  std::vector<VideoRecord> records;
  std::vector<std::uint64_t> video_seeds;
  const int children = 2 * config.n_children_per_class;
  for (int ci = 0; ci < children; ++ci) {
    const int label = ci < config.n_children_per_class ? 1 : 0;
    const auto gender = static_cast<Gender>(weighted_pick(rng, config.gender_weights));
    const auto age = static_cast<AgeGroup>(weighted_pick(rng, config.age_weights));
    const auto location = static_cast<Location>(weighted_pick(rng, config.location_weights));
    const bool superuser = label == 1 && uniform(rng, 0, 1) < config.superuser_fraction;
    const int videos =
        superuser ? std::uniform_int_distribution<int>(config.superuser_videos_min,
                                                       config.superuser_videos_max)(rng)
                  : std::uniform_int_distribution<int>(config.videos_per_child_min,
                                                       config.videos_per_child_max)(rng);
    for (int v = 0; v < videos; ++v) {
      VideoRecord r;
      r.video_id = fmt::format("v{:05d}", records.size());
      r.child_id = fmt::format("c{:04d}", ci);
      r.label = label;
      r.gender = gender;
      r.age_group = age;
      r.location = location;
      r.quality = passing_quality(rng);
      r.features_path = fmt::format("features/{}.jsonl", r.video_id);
      records.push_back(std::move(r));
      video_seeds.push_back(splitmix64(config.seed ^ splitmix64(records.size())));
    }
  }

  SynthCohort cohort;
  std::vector<std::size_t> order(records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t next = 0;
  for (const char* criterion : kCriterionOrder) {
    const auto it = config.quality_failures.find(criterion);
    if (it == config.quality_failures.end()) continue;
    const auto count = static_cast<std::size_t>(
        std::llround(it->second * static_cast<double>(records.size())));
    for (std::size_t k = 0; k < count && next < order.size(); ++k, ++next) {
      VideoRecord& r = records[order[next]];
      sabotage_quality(r.quality, criterion, config.criteria, rng);
      cohort.sabotage.push_back({r.video_id, criterion});
    }
  }
  std::sort(cohort.sabotage.begin(), cohort.sabotage.end(),
            [](const Rejection& a, const Rejection& b) { return a.video_id < b.video_id; });

  cohort.series.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    Rng vrng(video_seeds[i]);
    cohort.series.push_back(generate_series(config, records[i].video_id, records[i].label, vrng));
  }
  cohort.manifest = make_manifest(std::move(records));
  return cohort;
}

void write_cohort(const SynthCohort& cohort, const SynthConfig& config,
                  const std::filesystem::path& dir) {
  for (std::size_t i = 0; i < cohort.series.size(); ++i) {
    write_frame_series(dir / cohort.manifest.records[i].features_path, cohort.series[i]);
  }
  write_manifest(dir / "manifest.json", cohort.manifest);
  json sabotage = json::array();
  for (const auto& r : cohort.sabotage) {
    sabotage.push_back({{"video_id", r.video_id}, {"criterion", r.criterion}});
  }
  write_text_file(dir / "sabotage.json", sabotage.dump(2) + "\n");
  write_text_file(dir / "synth_config.json", synth_config_to_json(config).dump(2) + "\n");
}

}  // namespace pheno
