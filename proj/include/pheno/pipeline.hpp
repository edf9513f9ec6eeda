#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pheno/cohort.hpp"
#include "pheno/core_data.hpp"
#include "pheno/evaluation.hpp"
#include "pheno/features.hpp"
#include "pheno/training.hpp"

namespace pheno {

struct PipelineOptions {
  FilterCriteria criteria;
  int max_videos_per_positive_child = 2;
  EngineeringConfig engineering;
  double min_seconds = 15.0;
  bool keep_raw = false;
  SplitRatios ratios;
  std::uint64_t seed = 0;
};

using ModalitySeries = std::array<EngineeredSeries, 3>;

struct PreparedCohort {
  // Survivors of the quality filter, superuser cap and duration rule.
  std::vector<VideoRecord> records;
  FilterOutcome quality;
  FilterOutcome duration;
  std::map<std::string, ModalitySeries> engineered;
  std::map<std::string, ModalitySeries> raw;  // only with keep_raw
  SplitAssignment split;
};

// Keeps a video only when every modality meets the duration rule on its
// engineered frames.
FilterOutcome duration_filter(const std::map<std::string, ModalitySeries>& engineered,
                              double min_seconds);

PreparedCohort prepare_cohort(const Manifest& manifest, std::span<const VideoFeatureSeries> series,
                              const PipelineOptions& options);

struct SplitRecords {
  std::vector<VideoRecord> train;  // minority upsampled to the majority count
  std::vector<VideoRecord> val;
  std::vector<VideoRecord> test;
};

SplitRecords split_records(const std::vector<VideoRecord>& records, const SplitAssignment& split,
                           std::uint64_t upsample_seed);

std::vector<LabeledSequence> sequences_for(const std::map<std::string, ModalitySeries>& series,
                                           std::span<const VideoRecord> records,
                                           Modality modality);

ScoredSet scored_set(std::span<const VideoRecord> records, std::span<const double> scores);

}  // namespace pheno
