#pragma once

#include <algorithm>
#include <vector>

#include "pheno/core_data.hpp"

namespace pheno::testing {

// Reference windowing built from run lengths: cut at every missing run longer
// than s * fps that has present frames on both sides, strip each piece to its
// present span. A leading long run contributes one empty window; an input
// with no present frame yields a single empty window; empty input yields none.
inline std::vector<FrameSeq> reference_windows(const FrameSeq& frames, double s, double fps) {
  const double max_missing = s * fps;
  std::vector<FrameSeq> out;
  if (frames.empty()) return out;
  std::size_t first = frames.size();
  std::size_t last = 0;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (frames[i]) {
      first = std::min(first, i);
      last = i;
    }
  }
  if (first == frames.size()) return {FrameSeq{}};
  if (static_cast<double>(first) > max_missing) out.emplace_back();
  FrameSeq piece;
  std::size_t i = first;
  while (i <= last) {
    if (frames[i]) {
      piece.push_back(frames[i]);
      ++i;
      continue;
    }
    std::size_t j = i;
    while (!frames[j]) ++j;
    if (static_cast<double>(j - i) > max_missing) {
      out.push_back(piece);
      piece.clear();
    } else {
      piece.insert(piece.end(), frames.begin() + static_cast<long>(i), frames.begin() + static_cast<long>(j));
    }
    i = j;
  }
  out.push_back(piece);
  return out;
}

}  // namespace pheno::testing
