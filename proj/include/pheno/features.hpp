#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pheno/core_data.hpp"

namespace pheno {

struct EngineeringConfig {
  double gap_seconds = 2.0;         // longest in-window missing run tolerated
  double min_window_seconds = 5.0;  // window admission when concatenating
  double source_fps = 10.0;
  int downsample_factor = 2;
  double missing_token = -1.0;
  bool raw_mode = false;  // normalize + tokenize only

  void validate() const;
  double effective_fps() const {
    return raw_mode ? source_fps : source_fps / downsample_factor;
  }
};

EngineeringConfig engineering_config_from_json(const nlohmann::json& j);
nlohmann::json engineering_config_to_json(const EngineeringConfig& c);

// Model-ready sequence: each frame is entirely in [0,1]^d or entirely the
// missing token.
struct EngineeredSeries {
  std::string video_id;
  Modality modality = Modality::kEye;
  double effective_fps = 5.0;
  std::vector<FeatureVector> frames;

  int dim() const { return modality_dim(modality); }
  bool operator==(const EngineeredSeries&) const = default;
};

// Slice from the first to the last present frame; empty if none is present.
FrameSeq truncate_window(std::span<const Frame> frames);

// Splits wherever a missing run exceeds s * fps frames; shorter runs stay in
// their window. Follows the reference window-building procedure literally,
// including its edge behaviour: a leading missing run that is long enough to
// trigger a split, or an all-missing input, yields an empty window.
std::vector<FrameSeq> create_windows(std::span<const Frame> frames, double s, double fps);

// Drops windows shorter than min_seconds * fps frames and concatenates the
// rest in order.
FrameSeq concatenate_windows(std::span<const FrameSeq> windows, double min_seconds, double fps);

// Non-overlapping blocks of `factor` frames reduce to the mean of their
// present frames; all-missing blocks stay missing; a trailing partial block
// is reduced the same way.
FrameSeq downsample_pairs(std::span<const Frame> frames, int factor = 2);

// Angles map by (v + 180) / 360, coordinates clamp to [0, 1].
FrameSeq normalize_frames(std::span<const Frame> frames, Modality modality);

// True for feature positions that hold angles in degrees.
bool is_angle_feature(Modality modality, int index);

std::vector<FeatureVector> encode_missing(std::span<const Frame> frames, int dim,
                                          double token = -1.0);

struct EngineeringResult {
  EngineeredSeries series;
  // Frame count after concatenation, before downsampling (source rate).
  std::size_t pre_downsample_frames = 0;
};

EngineeringResult engineer_detailed(const VideoFeatureSeries& series, Modality modality,
                                    const EngineeringConfig& config);
EngineeredSeries engineer(const VideoFeatureSeries& series, Modality modality,
                          const EngineeringConfig& config);

// JSON Lines body `{"t": i, "x": [...]}` and its sidecar header.
std::string engineered_to_jsonl(const EngineeredSeries& series);
nlohmann::json engineered_header(const EngineeredSeries& series);
EngineeredSeries engineered_from_jsonl(const nlohmann::json& header, std::string_view body);

void write_engineered(const std::filesystem::path& body_path, const EngineeredSeries& series);
EngineeredSeries load_engineered(const std::filesystem::path& body_path);

}  // namespace pheno
