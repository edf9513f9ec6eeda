#include "pheno/core_data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "pheno/error.hpp"

namespace pheno {

using nlohmann::json;

std::string_view error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kMissingFile: return "MissingFile";
    case ErrorKind::kParseError: return "ParseError";
    case ErrorKind::kDuplicateVideoId: return "DuplicateVideoId";
    case ErrorKind::kRangeViolation: return "RangeViolation";
    case ErrorKind::kDimensionMismatch: return "DimensionMismatch";
    case ErrorKind::kNonMonotoneFrameIndex: return "NonMonotoneFrameIndex";
    case ErrorKind::kTargetBelowCurrent: return "TargetBelowCurrent";
    case ErrorKind::kNonFiniteInput: return "NonFiniteInput";
    case ErrorKind::kInvalidSpec: return "InvalidSpec";
    case ErrorKind::kDimMismatch: return "DimMismatch";
    case ErrorKind::kEmptySequence: return "EmptySequence";
    case ErrorKind::kEmptySplit: return "EmptySplit";
    case ErrorKind::kDivergenceDetected: return "DivergenceDetected";
    case ErrorKind::kGradMismatch: return "GradMismatch";
    case ErrorKind::kEmptySubset: return "EmptySubset";
    case ErrorKind::kSchemeMismatch: return "SchemeMismatch";
    case ErrorKind::kSingleClassSet: return "SingleClassSet";
    case ErrorKind::kInsufficientGroups: return "InsufficientGroups";
    case ErrorKind::kInvalidConfig: return "InvalidConfig";
    case ErrorKind::kIoError: return "IoError";
    case ErrorKind::kUnknownSubcommand: return "UnknownSubcommand";
    case ErrorKind::kConfigError: return "ConfigError";
  }
  return "Error";
}

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

void check_range(std::string_view field, double value, double lo, double hi) {
  if (!std::isfinite(value) || value < lo || value > hi) {
    throw Error(ErrorKind::kRangeViolation,
                fmt::format("{} = {} outside [{}, {}]", field, value, lo, hi),
                std::string(field), value);
  }
}

// 1-based line of a byte offset in `text`.
std::size_t line_of(std::string_view text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + byte, '\n'));
}

template <typename T>
T field(const json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw Error(ErrorKind::kParseError, fmt::format("line {}: missing key '{}'", line, key),
                key, static_cast<double>(line));
  }
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParseError,
                fmt::format("line {}: bad value for '{}': {}", line, key, e.what()), key,
                static_cast<double>(line));
  }
}

json quality_to_json(const QualityStats& q) {
  json j = json::object();
  j["sharpness"] = q.sharpness;
  j["brightness"] = q.brightness;
  j["no_face_prop"] = q.no_face_prop;
  j["multiface_prop"] = q.multiface_prop;
  j["face_size"] = q.face_size;
  j["eyes_open_prop"] = q.eyes_open_prop;
  j["median_head_pitch"] = q.median_head_pitch;
  j["median_head_roll"] = q.median_head_roll;
  j["median_head_yaw"] = q.median_head_yaw;
  j["eye_confidence"] = q.eye_confidence;
  return j;
}

QualityStats quality_from_json(const json& j, std::size_t line) {
  if (!j.is_object()) {
    throw Error(ErrorKind::kParseError, fmt::format("line {}: quality must be an object", line),
                "quality", static_cast<double>(line));
  }
  QualityStats q;
  q.sharpness = field<double>(j, "sharpness", line);
  q.brightness = field<double>(j, "brightness", line);
  q.no_face_prop = field<double>(j, "no_face_prop", line);
  q.multiface_prop = field<double>(j, "multiface_prop", line);
  q.face_size = field<double>(j, "face_size", line);
  q.eyes_open_prop = field<double>(j, "eyes_open_prop", line);
  q.median_head_pitch = field<double>(j, "median_head_pitch", line);
  q.median_head_roll = field<double>(j, "median_head_roll", line);
  q.median_head_yaw = field<double>(j, "median_head_yaw", line);
  q.eye_confidence = field<double>(j, "eye_confidence", line);
  return q;
}

json record_to_json(const VideoRecord& r) {
  json j = json::object();
  j["video_id"] = r.video_id;
  j["child_id"] = r.child_id;
  j["label"] = r.label;
  j["gender"] = std::string(gender_name(r.gender));
  j["age_group"] = std::string(age_group_name(r.age_group));
  j["location"] = std::string(location_name(r.location));
  j["quality"] = quality_to_json(r.quality);
  j["features_path"] = r.features_path;
  if (r.manual_exclude) j["manual_exclude"] = true;
  if (r.replica != 0) j["replica"] = r.replica;
  return j;
}

template <typename Fn>
auto parse_enum(Fn fn, const std::string& s, const char* key, std::size_t line) {
  try {
    return fn(s);
  } catch (const Error&) {
    throw Error(ErrorKind::kParseError, fmt::format("line {}: bad {} '{}'", line, key, s), key,
                static_cast<double>(line));
  }
}

VideoRecord record_from_json(const json& j, std::size_t line) {
  if (!j.is_object()) {
    throw Error(ErrorKind::kParseError, fmt::format("line {}: record must be an object", line),
                "", static_cast<double>(line));
  }
  VideoRecord r;
  r.video_id = field<std::string>(j, "video_id", line);
  r.child_id = field<std::string>(j, "child_id", line);
  r.label = field<int>(j, "label", line);
  r.gender = parse_enum(parse_gender, field<std::string>(j, "gender", line), "gender", line);
  r.age_group =
      parse_enum(parse_age_group, field<std::string>(j, "age_group", line), "age_group", line);
  r.location =
      parse_enum(parse_location, field<std::string>(j, "location", line), "location", line);
  r.quality = quality_from_json(field<json>(j, "quality", line), line);
  r.features_path = field<std::string>(j, "features_path", line);
  if (j.contains("manual_exclude")) r.manual_exclude = field<bool>(j, "manual_exclude", line);
  if (j.contains("replica")) r.replica = field<int>(j, "replica", line);
  return r;
}

const char* kModalityKeys[3] = {"eye", "head", "face"};

}  // namespace

std::string_view modality_name(Modality m) { return kModalityKeys[modality_index(m)]; }

Modality parse_modality(std::string_view name) {
  const std::string s = lower(name);
  for (Modality m : kAllModalities) {
    if (s == modality_name(m)) return m;
  }
  throw Error(ErrorKind::kConfigError, fmt::format("unknown modality '{}'", name),
              std::string(name));
}

std::string_view gender_name(Gender g) {
  switch (g) {
    case Gender::kMale: return "Male";
    case Gender::kFemale: return "Female";
    case Gender::kOther: return "Other";
  }
  return "Other";
}

std::string_view age_group_name(AgeGroup a) {
  switch (a) {
    case AgeGroup::k1To4: return "1-4";
    case AgeGroup::k5To8: return "5-8";
    case AgeGroup::k9To12: return "9-12";
  }
  return "1-4";
}

std::string_view location_name(Location l) {
  switch (l) {
    case Location::kUS: return "US";
    case Location::kOutsideUS: return "OutsideUS";
    case Location::kUnknown: return "Unknown";
  }
  return "Unknown";
}

Gender parse_gender(std::string_view s) {
  const std::string v = lower(s);
  if (v == "male" || v == "m") return Gender::kMale;
  if (v == "female" || v == "f") return Gender::kFemale;
  if (v == "other" || v == "na" || v == "other/na" || v == "none") return Gender::kOther;
  throw Error(ErrorKind::kParseError, fmt::format("unknown gender '{}'", s), "gender");
}

AgeGroup parse_age_group(std::string_view s) {
  if (s == "1-4") return AgeGroup::k1To4;
  if (s == "5-8") return AgeGroup::k5To8;
  if (s == "9-12") return AgeGroup::k9To12;
  throw Error(ErrorKind::kParseError, fmt::format("unknown age group '{}'", s), "age_group");
}

Location parse_location(std::string_view s) {
  const std::string v = lower(s);
  if (v == "us" || v == "united states") return Location::kUS;
  if (v == "outsideus" || v == "outside us") return Location::kOutsideUS;
  if (v == "unknown") return Location::kUnknown;
  throw Error(ErrorKind::kParseError, fmt::format("unknown location '{}'", s), "location");
}

FrameSeq VideoFeatureSeries::modality_frames(Modality m) const {
  FrameSeq out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(f.get(m));
  return out;
}

void validate_record(const VideoRecord& r) {
  if (r.label != 0 && r.label != 1) {
    throw Error(ErrorKind::kRangeViolation, fmt::format("label = {} not in {{0,1}}", r.label),
                "label", r.label);
  }
  const QualityStats& q = r.quality;
  check_range("sharpness", q.sharpness, 0, 100);
  check_range("brightness", q.brightness, 0, 100);
  check_range("no_face_prop", q.no_face_prop, 0, 1);
  check_range("multiface_prop", q.multiface_prop, 0, 1);
  check_range("face_size", q.face_size, 0, 100);
  check_range("eyes_open_prop", q.eyes_open_prop, 0, 1);
  check_range("median_head_pitch", q.median_head_pitch, -180, 180);
  check_range("median_head_roll", q.median_head_roll, -180, 180);
  check_range("median_head_yaw", q.median_head_yaw, -180, 180);
  check_range("eye_confidence", q.eye_confidence, 0, 100);
}

const VideoRecord* Manifest::find(std::string_view video_id) const {
  for (const auto& r : records) {
    if (r.video_id == video_id) return &r;
  }
  return nullptr;
}

Manifest make_manifest(std::vector<VideoRecord> records, const std::filesystem::path& base_dir) {
  Manifest m;
  for (const auto& r : records) {
    validate_record(r);
    std::filesystem::path p(r.features_path);
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    if (!m.feature_paths.emplace(r.video_id, p).second) {
      throw Error(ErrorKind::kDuplicateVideoId, fmt::format("duplicate video_id '{}'", r.video_id),
                  r.video_id);
    }
  }
  m.records = std::move(records);
  return m;
}

Manifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t line = line_of(text, e.byte == 0 ? 0 : e.byte - 1);
    throw Error(ErrorKind::kParseError, fmt::format("line {}: {}", line, e.what()), "",
                static_cast<double>(line));
  }
  if (!doc.is_array()) {
    throw Error(ErrorKind::kParseError, "line 1: manifest must be a JSON array", "", 1.0);
  }
  std::vector<VideoRecord> records;
  records.reserve(doc.size());
  // Element positions are not tracked by the parser; report the element index
  // instead, which coincides with the line for one-record-per-line manifests.
  std::size_t index = 0;
  for (const auto& item : doc) records.push_back(record_from_json(item, ++index));
  return make_manifest(std::move(records), base_dir);
}

Manifest load_manifest(const std::filesystem::path& path) {
  return parse_manifest(read_text_file(path), path.parent_path());
}

std::string manifest_to_string(const Manifest& manifest) {
  // One record per line keeps fixtures diffable.
  std::string out = "[\n";
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    out += "  ";
    out += record_to_json(manifest.records[i]).dump();
    out += (i + 1 < manifest.records.size()) ? ",\n" : "\n";
  }
  out += "]\n";
  return out;
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  write_text_file(path, manifest_to_string(manifest));
}

VideoFeatureSeries parse_frame_series(std::string_view text, std::string video_id,
                                      double expected_fps) {
  if (!(expected_fps > 0) || !std::isfinite(expected_fps)) {
    throw Error(ErrorKind::kRangeViolation, "fps must be positive", "fps", expected_fps);
  }
  VideoFeatureSeries series;
  series.video_id = std::move(video_id);
  series.fps = expected_fps;

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;

    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(ErrorKind::kParseError, fmt::format("line {}: {}", line_no, e.what()), "",
                  static_cast<double>(line_no));
    }
    if (!obj.is_object()) {
      throw Error(ErrorKind::kParseError, fmt::format("line {}: expected an object", line_no), "",
                  static_cast<double>(line_no));
    }

    FrameFeatures frame;
    frame.frame_index = field<std::int64_t>(obj, "t", line_no);
    const auto expected_index = static_cast<std::int64_t>(series.frames.size());
    if (frame.frame_index != expected_index) {
      throw Error(ErrorKind::kNonMonotoneFrameIndex,
                  fmt::format("line {}: frame index {} where {} was expected", line_no,
                              frame.frame_index, expected_index),
                  "t", static_cast<double>(frame.frame_index));
    }
    const json conf = obj.contains("conf") ? field<json>(obj, "conf", line_no) : json::object();
    for (Modality m : kAllModalities) {
      const char* key = kModalityKeys[modality_index(m)];
      const json value = field<json>(obj, key, line_no);
      if (!value.is_null()) {
        if (!value.is_array()) {
          throw Error(ErrorKind::kParseError,
                      fmt::format("line {}: '{}' must be an array or null", line_no, key), key,
                      static_cast<double>(line_no));
        }
        if (static_cast<int>(value.size()) != modality_dim(m)) {
          throw Error(ErrorKind::kDimensionMismatch,
                      fmt::format("line {}: {} vector has length {}, expected {}", line_no, key,
                                  value.size(), modality_dim(m)),
                      key, static_cast<double>(value.size()));
        }
        FeatureVector v;
        v.reserve(value.size());
        for (const auto& x : value) {
          if (!x.is_number()) {
            throw Error(ErrorKind::kParseError,
                        fmt::format("line {}: non-numeric entry in '{}'", line_no, key), key,
                        static_cast<double>(line_no));
          }
          v.push_back(x.get<double>());
        }
        frame.get(m) = std::move(v);
      }
      if (conf.contains(key)) {
        const double c = field<double>(conf, key, line_no);
        check_range(fmt::format("conf.{}", key), c, 0, 100);
        frame.confidence[modality_index(m)] = c;
      }
    }
    series.frames.push_back(std::move(frame));
  }
  return series;
}

VideoFeatureSeries load_frame_series(const std::filesystem::path& path, double expected_fps) {
  return parse_frame_series(read_text_file(path), path.stem().string(), expected_fps);
}

std::string frame_series_to_string(const VideoFeatureSeries& series) {
  std::string out;
  for (const auto& f : series.frames) {
    json obj = json::object();
    obj["t"] = f.frame_index;
    json conf = json::object();
    for (Modality m : kAllModalities) {
      const char* key = kModalityKeys[modality_index(m)];
      const Frame& v = f.get(m);
      obj[key] = v ? json(*v) : json(nullptr);
      conf[key] = f.confidence[modality_index(m)];
    }
    obj["conf"] = std::move(conf);
    out += obj.dump();
    out += '\n';
  }
  return out;
}

void write_frame_series(const std::filesystem::path& path, const VideoFeatureSeries& series) {
  write_text_file(path, frame_series_to_string(series));
}

std::string read_text_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorKind::kMissingFile, fmt::format("no such file: {}", path.string()),
                path.string());
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorKind::kIoError, fmt::format("cannot open {}", path.string()), path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error(ErrorKind::kIoError, fmt::format("cannot write {}", path.string()),
                path.string());
  }
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) {
    throw Error(ErrorKind::kIoError, fmt::format("short write to {}", path.string()),
                path.string());
  }
}

}  // namespace pheno
