#include "pheno/pipeline.hpp"

#include <algorithm>
#include <set>

#include <fmt/format.h>

#include "pheno/error.hpp"

namespace pheno {

FilterOutcome duration_filter(const std::map<std::string, ModalitySeries>& engineered,
                              double min_seconds) {
  FilterOutcome out;
  for (const auto& [id, series] : engineered) {
    bool keep = true;
    for (const auto& s : series) {
      const FilterOutcome one =
          enforce_min_duration({{id, s.frames.size()}}, s.effective_fps, min_seconds);
      keep = keep && one.rejected.empty();
    }
    if (keep) {
      out.kept.push_back(id);
    } else {
      out.rejected.push_back({id, "min_duration"});
    }
  }
  return out;
}

PreparedCohort prepare_cohort(const Manifest& manifest, std::span<const VideoFeatureSeries> series,
                              const PipelineOptions& options) {
  std::map<std::string, const VideoFeatureSeries*> by_id;
  for (const auto& s : series) by_id[s.video_id] = &s;

  PreparedCohort out;
  out.quality = apply_quality_filters(manifest, options.criteria);
  const std::set<std::string> passed(out.quality.kept.begin(), out.quality.kept.end());
  std::vector<VideoRecord> kept;
  for (const auto& r : manifest.records) {
    if (passed.count(r.video_id)) kept.push_back(r);
  }
  kept = undersample_superusers(kept, options.max_videos_per_positive_child);

  EngineeringConfig raw_cfg = options.engineering;
  raw_cfg.raw_mode = true;
  for (const auto& r : kept) {
    const auto it = by_id.find(r.video_id);
    if (it == by_id.end()) {
      throw Error(ErrorKind::kMissingFile, fmt::format("no frame series for '{}'", r.video_id),
                  r.video_id);
    }
    ModalitySeries eng;
    for (Modality m : kAllModalities) {
      eng[modality_index(m)] = engineer(*it->second, m, options.engineering);
    }
    out.engineered[r.video_id] = std::move(eng);
  }
  out.duration = duration_filter(out.engineered, options.min_seconds);
  for (const auto& rej : out.duration.rejected) out.engineered.erase(rej.video_id);

  for (const auto& r : kept) {
    if (!out.engineered.count(r.video_id)) continue;
    out.records.push_back(r);
    if (options.keep_raw) {
      ModalitySeries raw;
      for (Modality m : kAllModalities) {
        raw[modality_index(m)] = engineer(*by_id.at(r.video_id), m, raw_cfg);
      }
      out.raw[r.video_id] = std::move(raw);
    }
  }
  out.split = split_children(out.records, options.ratios, options.seed);
  return out;
}

SplitRecords split_records(const std::vector<VideoRecord>& records, const SplitAssignment& split,
                           std::uint64_t upsample_seed) {
  SplitRecords out;
  for (const auto& r : records) {
    switch (split.of(r.child_id)) {
      case Split::kTrain: out.train.push_back(r); break;
      case Split::kVal: out.val.push_back(r); break;
      case Split::kTest: out.test.push_back(r); break;
    }
  }
  std::array<int, 2> counts{0, 0};
  for (const auto& r : out.train) ++counts[r.label == 1];
  if (counts[0] > 0 && counts[1] > 0 && counts[0] != counts[1]) {
    out.train = upsample_minority(out.train, std::max(counts[0], counts[1]), upsample_seed);
  }
  return out;
}

std::vector<LabeledSequence> sequences_for(const std::map<std::string, ModalitySeries>& series,
                                           std::span<const VideoRecord> records,
                                           Modality modality) {
  std::vector<LabeledSequence> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    const auto it = series.find(r.video_id);
    if (it == series.end()) {
      throw Error(ErrorKind::kMissingFile, fmt::format("no engineered series for '{}'", r.video_id),
                  r.video_id);
    }
    out.push_back({to_sequence(it->second[modality_index(modality)]), r.label});
  }
  return out;
}

ScoredSet scored_set(std::span<const VideoRecord> records, std::span<const double> scores) {
  if (records.size() != scores.size()) {
    throw Error(ErrorKind::kDimMismatch, "score count differs from record count");
  }
  ScoredSet out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    out.push_back({records[i].video_id, scores[i], records[i].label, records[i].gender,
                   records[i].age_group});
  }
  return out;
}

}  // namespace pheno
