#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "pheno/error.hpp"
#include "pheno/features.hpp"
#include "test_support.hpp"
#include "window_oracle.hpp"

namespace pheno {
namespace {

using testing::Gen;
using testing::for_all;
using testing::reference_windows;
using testing::tagged;

const Frame kMissing = std::nullopt;

FrameSeq present_run(int n, int start = 0) {
  FrameSeq out;
  for (int i = 0; i < n; ++i) out.push_back(tagged(start + i));
  return out;
}

FrameSeq missing_run(int n) { return FrameSeq(static_cast<std::size_t>(n), kMissing); }

FrameSeq join(std::initializer_list<FrameSeq> parts) {
  FrameSeq out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

TEST(WindowOracleTest, AllPresenceMasksUpToLengthTwelve) {
  for (auto [s, fps] : {std::pair{1.0, 5.0}, std::pair{2.0, 10.0}}) {
    int cases = 0;
    for (int len = 0; len <= 12; ++len) {
      for (unsigned mask = 0; mask < (1u << len); ++mask) {
        FrameSeq frames;
        for (int i = 0; i < len; ++i) frames.push_back((mask >> i) & 1u ? tagged(i) : kMissing);
        ASSERT_EQ(create_windows(frames, s, fps), reference_windows(frames, s, fps))
            << "len " << len << " mask " << mask << " s " << s << " fps " << fps;
        ++cases;
      }
    }
    EXPECT_EQ(cases, 8191);
  }
}

TEST(TruncateTest, Examples) {
  EXPECT_EQ(truncate_window(join({missing_run(1), present_run(2), missing_run(1)})), present_run(2));
  EXPECT_TRUE(truncate_window(missing_run(2)).empty());
  EXPECT_EQ(truncate_window(present_run(3)), present_run(3));
}

TEST(TruncateProperty, Idempotent) {
  for_all(200, [](Gen& g) {
    FrameSeq f;
    const int n = g.integer(0, 30);
    for (int i = 0; i < n; ++i) f.push_back(g.coin(0.6) ? tagged(i) : kMissing);
    const FrameSeq once = truncate_window(f);
    EXPECT_EQ(truncate_window(once), once);
    if (!once.empty()) {
      EXPECT_TRUE(once.front().has_value());
      EXPECT_TRUE(once.back().has_value());
    }
  });
}

TEST(CreateWindowsTest, LongGapSplits) {
  const FrameSeq f = join({present_run(30), missing_run(25), present_run(30, 100)});
  const auto w = create_windows(f, 2, 10);
  ASSERT_EQ(w.size(), 2u);
  EXPECT_EQ(w[0], present_run(30));
  EXPECT_EQ(w[1], present_run(30, 100));
}

TEST(CreateWindowsTest, ShortGapIsRetained) {
  const FrameSeq f = join({present_run(30), missing_run(10), present_run(30, 100)});
  const auto w = create_windows(f, 2, 10);
  ASSERT_EQ(w.size(), 1u);
  EXPECT_EQ(w[0], f);
}

TEST(CreateWindowsTest, AllPresentIsOneWindow) {
  const auto w = create_windows(present_run(17), 2, 10);
  ASSERT_EQ(w.size(), 1u);
  EXPECT_EQ(w[0], present_run(17));
}

TEST(ConcatenateTest, Examples) {
  const std::vector<FrameSeq> short_long{present_run(40), present_run(60, 100)};
  EXPECT_EQ(concatenate_windows(short_long, 5, 10), present_run(60, 100));
  EXPECT_TRUE(concatenate_windows({}, 5, 10).empty());
  const std::vector<FrameSeq> at_threshold{present_run(50), present_run(50, 50)};
  EXPECT_EQ(concatenate_windows(at_threshold, 5, 10).size(), 100u);
}

TEST(ConcatenateProperty, LengthIsSumOfAdmittedWindows) {
  for_all(200, [](Gen& g) {
    std::vector<FrameSeq> windows;
    std::size_t admitted = 0;
    const double min_s = g.real(0.1, 3);
    const double fps = g.pick(std::vector<double>{5, 10});
    for (int k = g.integer(0, 6); k > 0; --k) {
      windows.push_back(present_run(g.integer(0, 40)));
      if (static_cast<double>(windows.back().size()) >= min_s * fps) admitted += windows.back().size();
    }
    EXPECT_EQ(concatenate_windows(windows, min_s, fps).size(), admitted);
  });
}

TEST(DownsampleTest, Examples) {
  const FrameSeq in{FeatureVector{2}, FeatureVector{4}, FeatureVector{6}, FeatureVector{8}};
  EXPECT_EQ(downsample_pairs(in), (FrameSeq{FeatureVector{3}, FeatureVector{7}}));
  EXPECT_EQ(downsample_pairs(FrameSeq{FeatureVector{2}, kMissing}), (FrameSeq{FeatureVector{2}}));
  EXPECT_EQ(downsample_pairs(missing_run(2)), (FrameSeq{kMissing}));
  EXPECT_EQ(downsample_pairs(FrameSeq{FeatureVector{1}, FeatureVector{3}, FeatureVector{9}}),
            (FrameSeq{FeatureVector{2}, FeatureVector{9}}));
}

TEST(NormalizeTest, AnglesAndClamping) {
  // Head layout: box width, height, left, top, then pitch, roll, yaw.
  FeatureVector head{0.2, 1.3, -0.4, 0.5, 0.0, 180.0, -180.0};
  ASSERT_TRUE(is_angle_feature(Modality::kHead, 6));
  ASSERT_FALSE(is_angle_feature(Modality::kHead, 1));
  const FrameSeq out = normalize_frames(FrameSeq{head}, Modality::kHead);
  ASSERT_TRUE(out[0].has_value());
  EXPECT_EQ(*out[0], (FeatureVector{0.2, 1.0, 0.0, 0.5, 0.5, 1.0, 0.0}));
  const FrameSeq eye = normalize_frames(FrameSeq{FeatureVector{0.0, 90.0}}, Modality::kEye);
  EXPECT_EQ(*eye[0], (FeatureVector{0.5, 0.75}));
}

TEST(EncodeMissingTest, Examples) {
  EXPECT_EQ(encode_missing(FrameSeq{kMissing}, 2), (std::vector<FeatureVector>{{-1, -1}}));
  const FrameSeq present{FeatureVector{0.1, 0.2}};
  EXPECT_EQ(encode_missing(present, 2), (std::vector<FeatureVector>{{0.1, 0.2}}));
  const FeatureVector h(7, 0.5);
  const auto out = encode_missing(FrameSeq{h, kMissing, h}, 7);
  EXPECT_EQ(out[1], FeatureVector(7, -1.0));
}

VideoFeatureSeries series_from(const FrameSeq& eye, double fps = 10.0) {
  VideoFeatureSeries s;
  s.video_id = "v";
  s.fps = fps;
  for (std::size_t t = 0; t < eye.size(); ++t) {
    FrameFeatures f;
    f.frame_index = static_cast<std::int64_t>(t);
    f.get(Modality::kEye) = eye[t];
    s.frames.push_back(f);
  }
  return s;
}

FrameSeq eye_frames(int n, Gen* g = nullptr) {
  FrameSeq out;
  for (int i = 0; i < n; ++i) {
    out.push_back(FeatureVector{g ? g->real(-90, 90) : 10.0, g ? g->real(-90, 90) : -10.0});
  }
  return out;
}

TEST(EngineerTest, AllMissingGivesEmptySeries) {
  EXPECT_TRUE(engineer(series_from(missing_run(40)), Modality::kEye, {}).frames.empty());
}

TEST(EngineerTest, FullyPresentHundredFramesHalve) {
  const EngineeredSeries e = engineer(series_from(eye_frames(100)), Modality::kEye, {});
  ASSERT_EQ(e.frames.size(), 50u);
  EXPECT_DOUBLE_EQ(e.effective_fps, 5.0);
  for (const auto& f : e.frames) {
    for (double x : f) {
      EXPECT_GE(x, 0.0);
      EXPECT_LE(x, 1.0);
    }
  }
}

TEST(EngineerTest, RawModeKeepsLengthAndTokenizes) {
  FrameSeq eye = eye_frames(30);
  eye[12] = kMissing;
  EngineeringConfig c;
  c.raw_mode = true;
  const EngineeredSeries e = engineer(series_from(eye), Modality::kEye, c);
  ASSERT_EQ(e.frames.size(), 30u);
  EXPECT_EQ(e.frames[12], FeatureVector(2, -1.0));
  EXPECT_DOUBLE_EQ(e.effective_fps, 10.0);
}

TEST(EngineerTest, InvalidConfigRejected) {
  EngineeringConfig c;
  c.downsample_factor = 0;
  EXPECT_PHENO_ERROR(c.validate(), ErrorKind::kInvalidConfig);
}

TEST(EngineerProperty, OutputFramesAreUnitOrTokenAndGapsAreBounded) {
  for_all(150, [](Gen& g) {
    FrameSeq eye;
    const int n = g.integer(0, 400);
    bool present = g.coin();
    while (static_cast<int>(eye.size()) < n) {
      const int run = present ? g.integer(1, 60) : g.integer(1, 40);
      for (int k = 0; k < run; ++k) eye.push_back(present ? FeatureVector{g.real(-200, 200), g.real(-200, 200)} : kMissing);
      present = !present;
    }
    const EngineeringConfig c;
    const EngineeredSeries e = engineer(series_from(eye), Modality::kEye, c);
    const int bound = static_cast<int>(std::ceil(c.gap_seconds * c.source_fps / c.downsample_factor));
    int run = 0;
    for (const auto& f : e.frames) {
      ASSERT_EQ(f.size(), 2u);
      const bool token = f == FeatureVector(2, c.missing_token);
      if (!token) {
        for (double x : f) {
          EXPECT_GE(x, 0.0);
          EXPECT_LE(x, 1.0);
        }
      }
      run = token ? run + 1 : 0;
      EXPECT_LE(run, bound);
    }
  });
}

TEST(EngineeredIoTest, JsonlRoundTrip) {
  Gen g(3);
  const EngineeredSeries e = engineer(series_from(eye_frames(80, &g)), Modality::kEye, {});
  const EngineeredSeries back = engineered_from_jsonl(engineered_header(e), engineered_to_jsonl(e));
  EXPECT_EQ(back, e);
}

}  // namespace
}  // namespace pheno
