#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "pheno/core_data.hpp"

namespace pheno::testing {

// Hand-rolled generator for property tests; every case is reproducible from
// the seed printed on failure.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  bool coin(double p = 0.5) { return std::bernoulli_distribution(p)(rng_); }
  template <class T>
  const T& pick(const std::vector<T>& xs) {
    return xs[static_cast<std::size_t>(integer(0, static_cast<int>(xs.size()) - 1))];
  }
  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

// Runs `body` on `cases` generators seeded 0..cases-1.
template <class F>
void for_all(int cases, F body) {
  for (int seed = 0; seed < cases; ++seed) {
    SCOPED_TRACE("property case seed " + std::to_string(seed));
    Gen gen(static_cast<std::uint64_t>(seed));
    body(gen);
    if (::testing::Test::HasFatalFailure()) return;
  }
}

inline VideoRecord make_record(std::string video_id, std::string child_id, int label,
                               Gender gender = Gender::kMale,
                               AgeGroup age = AgeGroup::k5To8) {
  VideoRecord r;
  r.video_id = std::move(video_id);
  r.child_id = std::move(child_id);
  r.label = label;
  r.gender = gender;
  r.age_group = age;
  r.location = Location::kUS;
  r.features_path = "features/" + r.video_id + ".jsonl";
  return r;
}

// Present frame carrying its position, so identity is visible in comparisons.
inline Frame tagged(int i) { return FeatureVector{static_cast<double>(i)}; }

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& name)
      : path_(std::filesystem::temp_directory_path() / ("pheno_test_" + name)) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace pheno::testing

// Asserts that `stmt` throws pheno::Error of the given kind.
#define EXPECT_PHENO_ERROR(stmt, error_kind)                                  \
  do {                                                                        \
    try {                                                                     \
      stmt;                                                                   \
      ADD_FAILURE() << "expected " << ::pheno::error_kind_name(error_kind);   \
    } catch (const ::pheno::Error& e) {                                       \
      EXPECT_EQ(e.kind(), error_kind) << e.what();                            \
    }                                                                         \
  } while (false)
