#include <algorithm>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "pheno/cohort.hpp"
#include "pheno/error.hpp"
#include "pheno/synth.hpp"
#include "test_support.hpp"

namespace pheno {
namespace {

SynthConfig small_config(std::uint64_t seed = 3) {
  SynthConfig c;
  c.n_children_per_class = 6;
  c.duration_min_seconds = 4;
  c.duration_max_seconds = 6;
  c.seed = seed;
  return c;
}

std::vector<Rejection> sorted(std::vector<Rejection> v) {
  std::sort(v.begin(), v.end(), [](const Rejection& a, const Rejection& b) {
    return a.video_id < b.video_id;
  });
  return v;
}

TEST(SynthTest, ClassPriorsMatchConfigExactly) {
  const SynthCohort cohort = generate_cohort(small_config());
  std::array<std::set<std::string>, 2> children;
  for (const auto& r : cohort.manifest.records) children[static_cast<std::size_t>(r.label)].insert(r.child_id);
  EXPECT_EQ(children[0].size(), 6u);
  EXPECT_EQ(children[1].size(), 6u);
  EXPECT_EQ(cohort.series.size(), cohort.manifest.records.size());
}

TEST(SynthTest, SameSeedSameFiles) {
  testing::TempDir dir("synth_det");
  const SynthConfig c = small_config(9);
  write_cohort(generate_cohort(c), c, dir.path() / "a");
  write_cohort(generate_cohort(c), c, dir.path() / "b");
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir.path() / "a")) {
    if (!e.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(e.path(), dir.path() / "a");
    EXPECT_EQ(read_text_file(e.path()), read_text_file(dir.path() / "b" / rel)) << rel;
  }
}

TEST(SynthTest, DifferentSeedsDiffer) {
  EXPECT_NE(generate_cohort(small_config(1)).series, generate_cohort(small_config(2)).series);
}

TEST(SynthTest, WrittenFilesPassLoaders) {
  testing::TempDir dir("synth_schema");
  const SynthConfig c = small_config(4);
  const SynthCohort cohort = generate_cohort(c);
  write_cohort(cohort, c, dir.path());
  const Manifest m = load_manifest(dir.path() / "manifest.json");
  EXPECT_EQ(m.records, cohort.manifest.records);
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    const auto& id = m.records[i].video_id;
    const VideoFeatureSeries s = load_frame_series(m.feature_paths.at(id), c.fps);
    EXPECT_EQ(s.frames, cohort.series[i].frames);
  }
}

TEST(SynthTest, InvalidConfigIsRejected) {
  SynthConfig c = small_config();
  c.delta_eye = 1.5;
  EXPECT_PHENO_ERROR(generate_cohort(c), ErrorKind::kInvalidConfig);
  c = small_config();
  c.quality_failures["no_such_criterion"] = 0.1;
  EXPECT_PHENO_ERROR(generate_cohort(c), ErrorKind::kInvalidConfig);
}

TEST(SynthTest, SabotageEqualsFilterRejectionsPerCriterion) {
  for (const char* criterion : kCriterionOrder) {
    SCOPED_TRACE(criterion);
    SynthConfig c = small_config(11);
    c.quality_failures[criterion] = 0.1;
    const SynthCohort cohort = generate_cohort(c);
    const FilterOutcome o = apply_quality_filters(cohort.manifest, c.criteria);
    EXPECT_FALSE(cohort.sabotage.empty());
    EXPECT_EQ(sorted(o.rejected), sorted(cohort.sabotage));
  }
}

TEST(SynthTest, MixedSabotageAlsoMatches) {
  SynthConfig c = small_config(12);
  for (const char* criterion : kCriterionOrder) c.quality_failures[criterion] = 0.03;
  const SynthCohort cohort = generate_cohort(c);
  EXPECT_EQ(sorted(apply_quality_filters(cohort.manifest, c.criteria).rejected),
            sorted(cohort.sabotage));
}

TEST(SynthTest, ConfigJsonRoundTrip) {
  SynthConfig c = small_config(5);
  c.quality_failures["yaw"] = 0.2;
  c.class_correlated_missingness = true;
  EXPECT_EQ(synth_config_to_json(synth_config_from_json(synth_config_to_json(c))),
            synth_config_to_json(c));
}

}  // namespace
}  // namespace pheno
