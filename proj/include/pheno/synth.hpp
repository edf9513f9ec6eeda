#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "pheno/cohort.hpp"
#include "pheno/core_data.hpp"

namespace pheno {

struct SynthConfig {
  int n_children_per_class = 30;
  int videos_per_child_min = 1;
  int videos_per_child_max = 3;
  // Share of positive-class children drawn with the superuser video count.
  double superuser_fraction = 0.15;
  int superuser_videos_min = 4;
  int superuser_videos_max = 8;

  // Class signal per modality in [0, 1]; 0 makes the classes identical.
  double delta_eye = 0.8;
  double delta_head = 0.4;
  double delta_face = 0.2;
  // Mean-reversion rate (1/s): negative class uses rate_base, positive class
  // rate_base * (rate_max / rate_base)^delta; each video scales its rate by
  // exp(N(0, rate_jitter)). Stationary spread scales with sqrt(rate / rate_base).
  double rate_base = 0.2;
  double rate_max = 12.0;
  double rate_jitter = 0.25;

  double fps = 10.0;
  double duration_min_seconds = 20.0;
  double duration_max_seconds = 40.0;

  // Shared across modalities: a two-state burst process whose stationary
  // missing share is missing_fraction and whose bursts average
  // mean_burst_seconds. Edge gaps are extra leading/trailing missing runs.
  double missing_fraction = 0.1;
  double mean_burst_seconds = 3.0;
  double edge_gap_prob = 0.3;
  double edge_gap_max_seconds = 10.0;
  // When set, positive-class videos get missing_fraction + class_missing_shift.
  bool class_correlated_missingness = false;
  double class_missing_shift = 0.1;

  std::array<double, 3> gender_weights{0.6, 0.38, 0.02};   // M, F, Other
  std::array<double, 3> age_weights{0.35, 0.4, 0.25};      // 1-4, 5-8, 9-12
  std::array<double, 3> location_weights{0.6, 0.3, 0.1};   // US, OutsideUS, Unknown

  // criterion name -> share of all videos made to fail exactly that criterion.
  std::map<std::string, double> quality_failures;
  FilterCriteria criteria;

  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json synth_config_to_json(const SynthConfig& c);
SynthConfig synth_config_from_json(const nlohmann::json& j);

struct SynthCohort {
  Manifest manifest;
  std::vector<VideoFeatureSeries> series;  // manifest order
  // Every video whose quality was set to fail, with the criterion it fails.
  std::vector<Rejection> sabotage;
};

// Deterministic in the config; features_path is features/<video_id>.jsonl.
SynthCohort generate_cohort(const SynthConfig& config);

// manifest.json, features/*.jsonl, sabotage.json, synth_config.json.
void write_cohort(const SynthCohort& cohort, const SynthConfig& config,
                  const std::filesystem::path& dir);

}  // namespace pheno
