#include "pheno/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <tuple>

#include <fmt/format.h>

#include "pheno/error.hpp"

namespace pheno {

using nlohmann::json;

void FilterCriteria::validate() const {
  const double values[] = {sharpness_min,    brightness_min,     no_face_prop_max,
                           multiface_prop_max, face_size_min,    head_angle_abs_max,
                           eye_confidence_min, eyes_open_prop_min};
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw Error(ErrorKind::kInvalidConfig, "filter thresholds must be finite");
    }
  }
  if (!(head_angle_abs_max > 0 && head_angle_abs_max <= 180)) {
    throw Error(ErrorKind::kInvalidConfig, "head angle bound must lie in (0, 180]",
                "head_angle_abs_max", head_angle_abs_max);
  }
}

FilterCriteria criteria_from_json(const json& j) {
  FilterCriteria c;
  c.sharpness_min = j.value("sharpness_min", c.sharpness_min);
  c.brightness_min = j.value("brightness_min", c.brightness_min);
  c.no_face_prop_max = j.value("no_face_prop_max", c.no_face_prop_max);
  c.multiface_prop_max = j.value("multiface_prop_max", c.multiface_prop_max);
  c.face_size_min = j.value("face_size_min", c.face_size_min);
  c.head_angle_abs_max = j.value("head_angle_abs_max", c.head_angle_abs_max);
  c.eye_confidence_min = j.value("eye_confidence_min", c.eye_confidence_min);
  c.eyes_open_prop_min = j.value("eyes_open_prop_min", c.eyes_open_prop_min);
  c.validate();
  return c;
}

json criteria_to_json(const FilterCriteria& c) {
  return json{{"sharpness_min", c.sharpness_min},
              {"brightness_min", c.brightness_min},
              {"no_face_prop_max", c.no_face_prop_max},
              {"multiface_prop_max", c.multiface_prop_max},
              {"face_size_min", c.face_size_min},
              {"head_angle_abs_max", c.head_angle_abs_max},
              {"eye_confidence_min", c.eye_confidence_min},
              {"eyes_open_prop_min", c.eyes_open_prop_min}};
}

json filter_outcome_to_json(const FilterOutcome& outcome) {
  json rejected = json::array();
  for (const auto& r : outcome.rejected) {
    rejected.push_back({{"video_id", r.video_id}, {"criterion", r.criterion}});
  }
  return json{{"kept", outcome.kept}, {"rejected", std::move(rejected)}};
}

std::string first_failed_criterion(const QualityStats& q, const FilterCriteria& c) {
  if (!(q.sharpness > c.sharpness_min)) return "sharpness";
  if (!(q.brightness > c.brightness_min)) return "brightness";
  if (!(q.no_face_prop < c.no_face_prop_max)) return "no_face";
  if (!(q.multiface_prop < c.multiface_prop_max)) return "multiface";
  if (!(q.face_size > c.face_size_min)) return "face_size";
  if (!(std::abs(q.median_head_pitch) < c.head_angle_abs_max)) return "pitch";
  if (!(std::abs(q.median_head_roll) < c.head_angle_abs_max)) return "roll";
  if (!(std::abs(q.median_head_yaw) < c.head_angle_abs_max)) return "yaw";
  if (!(q.eye_confidence > c.eye_confidence_min)) return "eye_confidence";
  if (!(q.eyes_open_prop > c.eyes_open_prop_min)) return "eyes_open";
  return {};
}

FilterOutcome apply_quality_filters(const Manifest& manifest, const FilterCriteria& criteria) {
  criteria.validate();
  FilterOutcome out;
  for (const auto& r : manifest.records) {
    std::string failed =
        r.manual_exclude ? kManualReviewCriterion : first_failed_criterion(r.quality, criteria);
    if (failed.empty()) {
      out.kept.push_back(r.video_id);
    } else {
      out.rejected.push_back({r.video_id, std::move(failed)});
    }
  }
  return out;
}

std::vector<VideoRecord> undersample_superusers(const std::vector<VideoRecord>& kept,
                                                int max_per_positive_child) {
  std::map<std::string, std::vector<const VideoRecord*>> positive_by_child;
  for (const auto& r : kept) {
    if (r.label == 1) positive_by_child[r.child_id].push_back(&r);
  }
  std::set<std::string> survivors;
  for (auto& [child, videos] : positive_by_child) {
    std::sort(videos.begin(), videos.end(), [](const VideoRecord* a, const VideoRecord* b) {
      const double qa = a->quality.mean_sharpness_brightness();
      const double qb = b->quality.mean_sharpness_brightness();
      if (qa != qb) return qa > qb;
      return a->video_id < b->video_id;
    });
    const auto cap = static_cast<std::size_t>(std::max(0, max_per_positive_child));
    for (std::size_t i = 0; i < std::min(cap, videos.size()); ++i) {
      survivors.insert(videos[i]->video_id);
    }
  }
  std::vector<VideoRecord> out;
  for (const auto& r : kept) {
    if (r.label != 1 || survivors.count(r.video_id)) out.push_back(r);
  }
  return out;
}

FilterOutcome enforce_min_duration(const std::map<std::string, std::size_t>& series_lengths,
                                   double engineered_fps, double min_seconds) {
  if (!(engineered_fps > 0)) {
    throw Error(ErrorKind::kInvalidConfig, "engineered fps must be positive", "engineered_fps",
                engineered_fps);
  }
  const double threshold = min_seconds * engineered_fps;
  FilterOutcome out;
  for (const auto& [id, length] : series_lengths) {
    if (static_cast<double>(length) >= threshold) {
      out.kept.push_back(id);
    } else {
      out.rejected.push_back({id, "min_duration"});
    }
  }
  return out;
}

std::string_view split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  throw Error(ErrorKind::kParseError, fmt::format("unknown split '{}'", s), std::string(s));
}

json split_to_json(const SplitAssignment& s) {
  json children = json::object();
  for (const auto& [child, split] : s.by_child) children[child] = std::string(split_name(split));
  return json{{"children", std::move(children)}, {"degraded_strata", s.degraded_strata}};
}

SplitAssignment split_from_json(const json& j) {
  SplitAssignment s;
  for (const auto& [child, split] : j.at("children").items()) {
    s.by_child[child] = parse_split(split.get<std::string>());
  }
  if (j.contains("degraded_strata")) {
    s.degraded_strata = j.at("degraded_strata").get<std::vector<std::string>>();
  }
  return s;
}

SplitAssignment split_children(const std::vector<VideoRecord>& records, SplitRatios ratios,
                               std::uint64_t seed) {
  const double ratio_sum = ratios.train + ratios.val + ratios.test;
  if (std::abs(ratio_sum - 1.0) > 1e-9 || ratios.train < 0 || ratios.val < 0 ||
      ratios.test < 0) {
    throw Error(ErrorKind::kInvalidConfig, fmt::format("split ratios sum to {}", ratio_sum),
                "ratios", ratio_sum);
  }

  // A child's stratum comes from its first video in input order.
  struct ChildInfo {
    std::string stratum;
    int videos = 0;
  };
  std::map<std::string, ChildInfo> children;
  for (const auto& r : records) {
    auto [it, inserted] = children.try_emplace(r.child_id);
    if (inserted) {
      it->second.stratum = fmt::format("{}|{}|{}", age_group_name(r.age_group),
                                       gender_name(r.gender), r.label);
    }
    ++it->second.videos;
  }
  std::map<std::string, std::vector<std::string>> strata;
  for (const auto& [child, info] : children) strata[info.stratum].push_back(child);

  const std::array<double, 3> ratio = {ratios.train, ratios.val, ratios.test};

  // Children are placed greedily into the split with the largest video-count
  // deficit against the ratios, measured over everything placed so far. The
  // deficit carries across strata so that many small strata still fill the
  // smaller splits. Ties go to the larger ratio, then the earlier split.
  std::mt19937_64 rng(seed);
  SplitAssignment out;
  std::array<double, 3> placed{0, 0, 0};
  double placed_total = 0;
  for (auto& [stratum, members] : strata) {
    std::shuffle(members.begin(), members.end(), rng);
    std::array<int, 3> assigned{0, 0, 0};
    for (const auto& c : members) {
      const double videos = children[c].videos;
      int chosen = -1;
      double best = 0;
      for (int s = 0; s < 3; ++s) {
        if (ratio[s] <= 0) continue;
        const double deficit = ratio[s] * (placed_total + videos) - placed[s];
        const bool better = chosen < 0 || deficit > best + 1e-9 ||
                            (std::abs(deficit - best) <= 1e-9 && ratio[s] > ratio[chosen]);
        if (better) {
          chosen = s;
          best = deficit;
        }
      }
      placed[chosen] += videos;
      placed_total += videos;
      ++assigned[chosen];
      out.by_child[c] = static_cast<Split>(chosen);
    }
    for (int s = 0; s < 3; ++s) {
      if (ratio[s] > 0 && assigned[s] == 0) {
        out.degraded_strata.push_back(stratum);
        break;
      }
    }
  }
  return out;
}

std::vector<VideoRecord> upsample_minority(const std::vector<VideoRecord>& train_records,
                                           int target_minority_count, std::uint64_t seed) {
  std::array<std::vector<std::size_t>, 2> by_label;
  for (std::size_t i = 0; i < train_records.size(); ++i) {
    by_label[train_records[i].label == 1 ? 1 : 0].push_back(i);
  }
  const int minority = by_label[1].size() < by_label[0].size() ? 1 : 0;
  const auto& pool = by_label[minority];
  const int current = static_cast<int>(pool.size());
  if (target_minority_count < current) {
    throw Error(ErrorKind::kTargetBelowCurrent,
                fmt::format("target {} below current minority count {}", target_minority_count,
                            current),
                "target_minority_count", target_minority_count);
  }
  std::vector<VideoRecord> out = train_records;
  if (target_minority_count == current) return out;
  if (pool.empty()) {
    throw Error(ErrorKind::kEmptySplit, "no minority-class videos to upsample");
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  std::map<std::size_t, int> replica_count;
  for (int i = current; i < target_minority_count; ++i) {
    const std::size_t src = pool[pick(rng)];
    VideoRecord copy = train_records[src];
    copy.replica = ++replica_count[src];
    out.push_back(std::move(copy));
  }
  return out;
}

CohortReport cohort_report(const std::vector<VideoRecord>& records) {
  CohortReport rep;
  for (Gender g : kAllGenders) rep.by_gender[std::string(gender_name(g))];
  for (AgeGroup a : kAllAgeGroups) rep.by_age_group[std::string(age_group_name(a))];
  for (Location l : kAllLocations) rep.by_location[std::string(location_name(l))];

  std::map<std::string, int> per_child;
  std::set<std::tuple<std::string, std::string, int>> seen;  // (section+category, child, label)
  auto count = [&](std::map<std::string, LabelCounts>& section, const std::string& tag,
                   const std::string& category, const VideoRecord& r) {
    LabelCounts& c = section[category];
    ++c.videos[r.label];
    if (seen.emplace(tag + category, r.child_id, r.label).second) ++c.children[r.label];
  };
  for (const auto& r : records) {
    ++rep.total_videos[r.label];
    if (seen.emplace("total", r.child_id, r.label).second) ++rep.total_children[r.label];
    ++per_child[r.child_id];
    count(rep.by_gender, "g:", std::string(gender_name(r.gender)), r);
    count(rep.by_age_group, "a:", std::string(age_group_name(r.age_group)), r);
    count(rep.by_location, "l:", std::string(location_name(r.location)), r);
  }
  for (const auto& [child, n] : per_child) ++rep.videos_per_child[n];
  return rep;
}

namespace {

json label_counts_json(const LabelCounts& c) {
  return json{{"videos", {{"ASD", c.videos[1]}, {"NT", c.videos[0]}}},
              {"children", {{"ASD", c.children[1]}, {"NT", c.children[0]}}}};
}

}  // namespace

json cohort_report_to_json(const CohortReport& rep) {
  json j;
  j["total"] = label_counts_json({rep.total_videos, rep.total_children});
  for (const auto& [name, section] :
       {std::pair{"gender", &rep.by_gender}, std::pair{"age_group", &rep.by_age_group},
        std::pair{"location", &rep.by_location}}) {
    json s = json::object();
    for (const auto& [cat, c] : *section) s[cat] = label_counts_json(c);
    j[name] = std::move(s);
  }
  json hist = json::object();
  for (const auto& [n, children] : rep.videos_per_child) hist[std::to_string(n)] = children;
  j["videos_per_child"] = std::move(hist);
  return j;
}

std::string cohort_report_csv(const CohortReport& rep) {
  std::string out = "section,category,videos_asd,videos_nt,videos_total,children_asd,children_nt,"
                    "children_total\n";
  auto row = [&](std::string_view section, std::string_view cat, const LabelCounts& c) {
    out += fmt::format("{},{},{},{},{},{},{},{}\n", section, cat, c.videos[1], c.videos[0],
                       c.videos[0] + c.videos[1], c.children[1], c.children[0],
                       c.children[0] + c.children[1]);
  };
  for (Gender g : kAllGenders) row("gender", gender_name(g), rep.by_gender.at(std::string(gender_name(g))));
  for (AgeGroup a : kAllAgeGroups) {
    row("age_group", age_group_name(a), rep.by_age_group.at(std::string(age_group_name(a))));
  }
  for (Location l : kAllLocations) {
    row("location", location_name(l), rep.by_location.at(std::string(location_name(l))));
  }
  row("total", "all", {rep.total_videos, rep.total_children});
  return out;
}

}  // namespace pheno
