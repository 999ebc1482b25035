#pragma once

#include <filesystem>
#include <tuple>
#include <vector>

#include "univcd/core.hpp"

namespace univcd {

struct MaskSet {
  std::vector<BinaryMask> masks;
  std::vector<double> confidences;

  void validate() const;
  std::size_t size() const noexcept { return masks.size(); }
};

struct MatchPair {
  int index1 = 0;
  int index2 = 0;
  double iou = 0.0;
  friend bool operator==(const MatchPair&, const MatchPair&) = default;
};

struct MatchResult {
  std::vector<MatchPair> pairs;
  std::vector<int> unmatched1;
  std::vector<int> unmatched2;
};

/// Masks with confidence >= c, order preserved.
MaskSet filter_by_confidence(const MaskSet& s, double c);

/// Cross IoU table, rows indexing m1.
std::vector<std::vector<double>> iou_table(const MaskSet& m1, const MaskSet& m2);

/// Greedy matching over a precomputed IoU table: repeatedly take the highest remaining IoU
/// (ties to the lowest (i, j)), stopping below theta.
MatchResult match_from_table(const std::vector<std::vector<double>>& iou, double theta);
MatchResult match_masks(const MaskSet& m1, const MaskSet& m2, double theta);

/// Union of every unmatched mask from both epochs. `height`/`width` size the result when both
/// sets are empty.
BinaryMask change_map(const MaskSet& m1, const MaskSet& m2, const MatchResult& result, int height = 0,
                      int width = 0);

struct BaselineConfig {
  double confidence = 0.5;
  double theta = 0.5;

  void validate() const;
  friend bool operator==(const BaselineConfig&, const BaselineConfig&) = default;
};

/// Mask PNGs in `dir` (sorted by name) with confidences from `dir/confidences.json`
/// ({"<file name>": confidence}); files absent from the manifest get confidence 1.
MaskSet load_mask_set(const std::filesystem::path& dir);

}  // namespace univcd
