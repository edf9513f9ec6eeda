#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pheno/core_data.hpp"

namespace pheno {

// Video-level admission thresholds. Every comparison is strict: a value
// sitting exactly on a threshold fails.
struct FilterCriteria {
  double sharpness_min = 4.0;
  double brightness_min = 20.0;
  double no_face_prop_max = 0.6;
  double multiface_prop_max = 0.3;
  double face_size_min = 0.01;
  double head_angle_abs_max = 45.0;  // applied to |pitch|, |roll|, |yaw|
  double eye_confidence_min = 75.0;
  double eyes_open_prop_min = 0.7;

  void validate() const;
};

FilterCriteria criteria_from_json(const nlohmann::json& j);
nlohmann::json criteria_to_json(const FilterCriteria& c);

// Evaluation order of the criteria; the first failing one is reported.
inline constexpr std::array<const char*, 10> kCriterionOrder = {
    "sharpness", "brightness", "no_face", "multiface", "face_size",
    "pitch",     "roll",       "yaw",     "eye_confidence", "eyes_open"};

inline constexpr const char* kManualReviewCriterion = "manual_review";

struct Rejection {
  std::string video_id;
  std::string criterion;
  bool operator==(const Rejection&) const = default;
};

struct FilterOutcome {
  std::vector<std::string> kept;
  std::vector<Rejection> rejected;
};

nlohmann::json filter_outcome_to_json(const FilterOutcome& outcome);

// Returns the first failing criterion, or an empty string if the video passes.
std::string first_failed_criterion(const QualityStats& q, const FilterCriteria& c);

FilterOutcome apply_quality_filters(const Manifest& manifest, const FilterCriteria& criteria);

// Caps each positive-label child at `max_per_positive_child` videos, keeping
// the highest mean(sharpness, brightness); ties go to the smaller video_id.
// Negative-label videos all survive. Input order is preserved.
std::vector<VideoRecord> undersample_superusers(const std::vector<VideoRecord>& kept,
                                                int max_per_positive_child = 2);

FilterOutcome enforce_min_duration(const std::map<std::string, std::size_t>& series_lengths,
                                   double engineered_fps, double min_seconds = 15.0);

enum class Split { kTrain, kVal, kTest };
std::string_view split_name(Split s);
Split parse_split(std::string_view s);

struct SplitRatios {
  double train = 0.622;
  double val = 0.18;
  double test = 0.198;
};

struct SplitAssignment {
  std::map<std::string, Split> by_child;
  // Strata that could not receive every split with a positive ratio.
  std::vector<std::string> degraded_strata;

  Split of(const std::string& child_id) const { return by_child.at(child_id); }
};

nlohmann::json split_to_json(const SplitAssignment& s);
SplitAssignment split_from_json(const nlohmann::json& j);

SplitAssignment split_children(const std::vector<VideoRecord>& records, SplitRatios ratios,
                               std::uint64_t seed);

// Duplicates minority-class videos (sampled with replacement) until the
// minority count reaches `target_minority_count`. Originals come first in
// input order; replicas follow with replica = 1, 2, ... per source video.
std::vector<VideoRecord> upsample_minority(const std::vector<VideoRecord>& train_records,
                                           int target_minority_count, std::uint64_t seed);

struct LabelCounts {
  std::array<int, 2> videos{0, 0};
  std::array<int, 2> children{0, 0};
};

struct CohortReport {
  std::array<int, 2> total_videos{0, 0};
  std::array<int, 2> total_children{0, 0};
  std::map<std::string, LabelCounts> by_gender;
  std::map<std::string, LabelCounts> by_age_group;
  std::map<std::string, LabelCounts> by_location;
  // videos-per-child -> number of children
  std::map<int, int> videos_per_child;
};

CohortReport cohort_report(const std::vector<VideoRecord>& records);
nlohmann::json cohort_report_to_json(const CohortReport& report);
// Table layout: section, category, video ASD/NT/Total, child ASD/NT/Total.
std::string cohort_report_csv(const CohortReport& report);

}  // namespace pheno
