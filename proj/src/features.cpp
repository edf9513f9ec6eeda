#include "pheno/features.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "pheno/error.hpp"

namespace pheno {

using nlohmann::json;

void EngineeringConfig::validate() const {
  if (!(gap_seconds > 0) || !(min_window_seconds > 0) || downsample_factor < 1 ||
      !(source_fps > 0)) {
    throw Error(ErrorKind::kInvalidConfig,
                "engineering config needs gap_seconds > 0, min_window_seconds > 0, "
                "downsample_factor >= 1, source_fps > 0");
  }
}

EngineeringConfig engineering_config_from_json(const json& j) {
  EngineeringConfig c;
  c.gap_seconds = j.value("gap_seconds", c.gap_seconds);
  c.min_window_seconds = j.value("min_window_seconds", c.min_window_seconds);
  c.source_fps = j.value("source_fps", c.source_fps);
  c.downsample_factor = j.value("downsample_factor", c.downsample_factor);
  c.missing_token = j.value("missing_token", c.missing_token);
  c.raw_mode = j.value("raw_mode", c.raw_mode);
  c.validate();
  return c;
}

json engineering_config_to_json(const EngineeringConfig& c) {
  return json{{"gap_seconds", c.gap_seconds},
              {"min_window_seconds", c.min_window_seconds},
              {"source_fps", c.source_fps},
              {"downsample_factor", c.downsample_factor},
              {"missing_token", c.missing_token},
              {"raw_mode", c.raw_mode}};
}

FrameSeq truncate_window(std::span<const Frame> frames) {
  auto present = [](const Frame& f) { return f.has_value(); };
  const auto first = std::find_if(frames.begin(), frames.end(), present);
  if (first == frames.end()) return {};
  const auto last = std::find_if(frames.rbegin(), frames.rend(), present);
  return FrameSeq(first, last.base());
}

std::vector<FrameSeq> create_windows(std::span<const Frame> frames, double s, double fps) {
  const double max_missing = s * fps;
  std::vector<FrameSeq> windows;
  FrameSeq current;
  long count_missing = 0;
  for (const Frame& frame : frames) {
    if (frame) {
      if (static_cast<double>(count_missing) > max_missing) {
        if (!current.empty()) {
          windows.push_back(truncate_window(current));
          current.clear();
        }
        count_missing = 0;
      }
      current.push_back(frame);
      count_missing = 0;
    } else {
      ++count_missing;
      if (static_cast<double>(count_missing) <= max_missing) current.push_back(frame);
    }
  }
  if (!current.empty()) windows.push_back(truncate_window(current));
  return windows;
}

FrameSeq concatenate_windows(std::span<const FrameSeq> windows, double min_seconds, double fps) {
  const double threshold = min_seconds * fps;
  FrameSeq out;
  for (const auto& w : windows) {
    if (static_cast<double>(w.size()) >= threshold) out.insert(out.end(), w.begin(), w.end());
  }
  return out;
}

FrameSeq downsample_pairs(std::span<const Frame> frames, int factor) {
  if (factor < 1) {
    throw Error(ErrorKind::kInvalidConfig, "downsample factor must be >= 1", "factor", factor);
  }
  FrameSeq out;
  out.reserve((frames.size() + factor - 1) / factor);
  for (std::size_t start = 0; start < frames.size(); start += factor) {
    const std::size_t stop = std::min(frames.size(), start + static_cast<std::size_t>(factor));
    FeatureVector sum;
    int present = 0;
    for (std::size_t i = start; i < stop; ++i) {
      if (!frames[i]) continue;
      if (sum.empty()) {
        sum = *frames[i];
      } else {
        for (std::size_t k = 0; k < sum.size(); ++k) sum[k] += (*frames[i])[k];
      }
      ++present;
    }
    if (present == 0) {
      out.emplace_back(std::nullopt);
    } else {
      for (double& v : sum) v /= present;
      out.emplace_back(std::move(sum));
    }
  }
  return out;
}

bool is_angle_feature(Modality modality, int index) {
  switch (modality) {
    case Modality::kEye:
      return true;  // yaw, pitch
    case Modality::kHead:
      return index >= 4;  // box (width, height, left, top) then pitch, roll, yaw
    case Modality::kFace:
      return false;  // landmark coordinates
  }
  return false;
}

FrameSeq normalize_frames(std::span<const Frame> frames, Modality modality) {
  FrameSeq out;
  out.reserve(frames.size());
  for (const Frame& f : frames) {
    if (!f) {
      out.emplace_back(std::nullopt);
      continue;
    }
    FeatureVector v = *f;
    for (std::size_t k = 0; k < v.size(); ++k) {
      if (!std::isfinite(v[k])) {
        throw Error(ErrorKind::kNonFiniteInput,
                    fmt::format("non-finite {} feature at index {}", modality_name(modality), k),
                    std::string(modality_name(modality)), static_cast<double>(k));
      }
      const double x = is_angle_feature(modality, static_cast<int>(k)) ? (v[k] + 180.0) / 360.0
                                                                       : v[k];
      v[k] = std::clamp(x, 0.0, 1.0);
    }
    out.emplace_back(std::move(v));
  }
  return out;
}

std::vector<FeatureVector> encode_missing(std::span<const Frame> frames, int dim, double token) {
  std::vector<FeatureVector> out;
  out.reserve(frames.size());
  for (const Frame& f : frames) {
    out.push_back(f ? *f : FeatureVector(static_cast<std::size_t>(dim), token));
  }
  return out;
}

EngineeringResult engineer_detailed(const VideoFeatureSeries& series, Modality modality,
                                    const EngineeringConfig& config) {
  config.validate();
  const FrameSeq frames = series.modality_frames(modality);
  EngineeringResult result;
  result.series.video_id = series.video_id;
  result.series.modality = modality;

  FrameSeq staged;
  if (config.raw_mode) {
    staged = frames;
    result.pre_downsample_frames = staged.size();
    result.series.effective_fps = series.fps;
  } else {
    const FrameSeq truncated = truncate_window(frames);
    const auto windows = create_windows(truncated, config.gap_seconds, series.fps);
    const FrameSeq joined = concatenate_windows(windows, config.min_window_seconds, series.fps);
    result.pre_downsample_frames = joined.size();
    staged = downsample_pairs(joined, config.downsample_factor);
    result.series.effective_fps = series.fps / config.downsample_factor;
  }
  result.series.frames =
      encode_missing(normalize_frames(staged, modality), modality_dim(modality),
                     config.missing_token);
  return result;
}

EngineeredSeries engineer(const VideoFeatureSeries& series, Modality modality,
                          const EngineeringConfig& config) {
  return engineer_detailed(series, modality, config).series;
}

std::string engineered_to_jsonl(const EngineeredSeries& series) {
  std::string out;
  for (std::size_t t = 0; t < series.frames.size(); ++t) {
    out += json{{"t", t}, {"x", series.frames[t]}}.dump();
    out += '\n';
  }
  return out;
}

json engineered_header(const EngineeredSeries& series) {
  return json{{"video_id", series.video_id},
              {"modality", std::string(modality_name(series.modality))},
              {"effective_fps", series.effective_fps},
              {"d", series.dim()},
              {"frames", series.frames.size()}};
}

EngineeredSeries engineered_from_jsonl(const json& header, std::string_view body) {
  EngineeredSeries s;
  try {
    s.video_id = header.at("video_id").get<std::string>();
    s.modality = parse_modality(header.at("modality").get<std::string>());
    s.effective_fps = header.at("effective_fps").get<double>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParseError, fmt::format("bad engineered header: {}", e.what()));
  }
  const int d = s.dim();
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < body.size()) {
    std::size_t end = body.find('\n', pos);
    if (end == std::string_view::npos) end = body.size();
    const std::string_view line = body.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      const json obj = json::parse(line);
      if (obj.at("t").get<std::size_t>() != s.frames.size()) {
        throw Error(ErrorKind::kNonMonotoneFrameIndex,
                    fmt::format("line {}: unexpected frame index", line_no));
      }
      FeatureVector x = obj.at("x").get<FeatureVector>();
      if (static_cast<int>(x.size()) != d) {
        throw Error(ErrorKind::kDimensionMismatch,
                    fmt::format("line {}: frame has length {}, expected {}", line_no, x.size(), d),
                    std::string(modality_name(s.modality)), static_cast<double>(x.size()));
      }
      s.frames.push_back(std::move(x));
    } catch (const json::exception& e) {
      throw Error(ErrorKind::kParseError, fmt::format("line {}: {}", line_no, e.what()), "",
                  static_cast<double>(line_no));
    }
  }
  return s;
}

namespace {

std::filesystem::path header_path_for(const std::filesystem::path& body_path) {
  std::filesystem::path p = body_path;
  p.replace_extension(".header.json");
  return p;
}

}  // namespace

void write_engineered(const std::filesystem::path& body_path, const EngineeredSeries& series) {
  write_text_file(body_path, engineered_to_jsonl(series));
  write_text_file(header_path_for(body_path), engineered_header(series).dump(2) + "\n");
}

EngineeredSeries load_engineered(const std::filesystem::path& body_path) {
  const json header = json::parse(read_text_file(header_path_for(body_path)));
  return engineered_from_jsonl(header, read_text_file(body_path));
}

}  // namespace pheno
