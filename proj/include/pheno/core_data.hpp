#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pheno {

enum class Modality { kEye = 0, kHead = 1, kFace = 2 };

inline constexpr std::array<Modality, 3> kAllModalities = {
    Modality::kEye, Modality::kHead, Modality::kFace};

constexpr int modality_dim(Modality m) {
  switch (m) {
    case Modality::kEye:
      return 2;
    case Modality::kHead:
      return 7;
    case Modality::kFace:
      return 60;
  }
  return 0;
}

constexpr std::size_t modality_index(Modality m) {
  return static_cast<std::size_t>(m);
}

std::string_view modality_name(Modality m);
// Accepts "eye", "head", "face" (case-insensitive).
Modality parse_modality(std::string_view name);

using FeatureVector = std::vector<double>;
// An absent frame means "no detection for this modality in this frame".
using Frame = std::optional<FeatureVector>;
using FrameSeq = std::vector<Frame>;

struct FrameFeatures {
  std::int64_t frame_index = 0;
  std::array<Frame, 3> features;
  std::array<double, 3> confidence{0.0, 0.0, 0.0};

  const Frame& get(Modality m) const { return features[modality_index(m)]; }
  Frame& get(Modality m) { return features[modality_index(m)]; }

  bool operator==(const FrameFeatures&) const = default;
};

struct VideoFeatureSeries {
  std::string video_id;
  double fps = 10.0;
  std::vector<FrameFeatures> frames;

  // The per-frame view of one modality, in frame order.
  FrameSeq modality_frames(Modality m) const;

  bool operator==(const VideoFeatureSeries&) const = default;
};

enum class Gender { kMale, kFemale, kOther };
enum class AgeGroup { k1To4, k5To8, k9To12 };
enum class Location { kUS, kOutsideUS, kUnknown };

std::string_view gender_name(Gender g);
std::string_view age_group_name(AgeGroup a);
std::string_view location_name(Location l);
Gender parse_gender(std::string_view s);
AgeGroup parse_age_group(std::string_view s);
Location parse_location(std::string_view s);

inline constexpr std::array<Gender, 3> kAllGenders = {Gender::kMale, Gender::kFemale,
                                                      Gender::kOther};
inline constexpr std::array<AgeGroup, 3> kAllAgeGroups = {
    AgeGroup::k1To4, AgeGroup::k5To8, AgeGroup::k9To12};
inline constexpr std::array<Location, 3> kAllLocations = {
    Location::kUS, Location::kOutsideUS, Location::kUnknown};

// Video-level quality statistics as exported by the face-analysis step.
struct QualityStats {
  double sharpness = 50.0;        // [0, 100]
  double brightness = 50.0;       // [0, 100]
  double no_face_prop = 0.0;      // [0, 1]
  double multiface_prop = 0.0;    // [0, 1]
  double face_size = 10.0;        // [0, 100]
  double eyes_open_prop = 1.0;    // [0, 1]
  double median_head_pitch = 0.0; // [-180, 180]
  double median_head_roll = 0.0;  // [-180, 180]
  double median_head_yaw = 0.0;   // [-180, 180]
  double eye_confidence = 90.0;   // [0, 100]

  double mean_sharpness_brightness() const { return 0.5 * (sharpness + brightness); }

  bool operator==(const QualityStats&) const = default;
};

struct VideoRecord {
  std::string video_id;
  std::string child_id;
  int label = 0;  // 0 = NT, 1 = ASD
  Gender gender = Gender::kOther;
  AgeGroup age_group = AgeGroup::k1To4;
  Location location = Location::kUnknown;
  QualityStats quality;
  std::string features_path;
  // Set by manual review; the cohort filter rejects these first.
  bool manual_exclude = false;
  // 0 for an original video, k >= 1 for the k-th upsampled duplicate.
  int replica = 0;

  bool operator==(const VideoRecord&) const = default;
};

// Throws RangeViolation on the first field out of range.
void validate_record(const VideoRecord& record);

struct Manifest {
  std::vector<VideoRecord> records;
  // video_id -> resolved feature-file path
  std::map<std::string, std::filesystem::path> feature_paths;

  const VideoRecord* find(std::string_view video_id) const;
  bool operator==(const Manifest&) const = default;
};

// Builds a manifest, resolving relative features_path values against
// `base_dir`. Validates every record and id uniqueness.
Manifest make_manifest(std::vector<VideoRecord> records,
                       const std::filesystem::path& base_dir = {});

Manifest load_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);
// JSON text of a manifest, as written by write_manifest.
std::string manifest_to_string(const Manifest& manifest);
Manifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir = {});

VideoFeatureSeries load_frame_series(const std::filesystem::path& path, double expected_fps);
VideoFeatureSeries parse_frame_series(std::string_view text, std::string video_id,
                                      double expected_fps);
void write_frame_series(const std::filesystem::path& path, const VideoFeatureSeries& series);
std::string frame_series_to_string(const VideoFeatureSeries& series);

// Reads a whole file; throws MissingFile / IoError.
std::string read_text_file(const std::filesystem::path& path);
// Writes a whole file, creating parent directories; throws IoError.
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace pheno
