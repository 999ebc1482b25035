#pragma once

#include <functional>
#include <vector>

#include "univcd/core.hpp"

namespace univcd {

/// Overlapping placements of a square tile over an image. Placements start at (0,0),
/// advance by tile - floor(tile * overlap), and the last row/column clamps to the edge.
struct TilingPlan {
  int image_height = 0;
  int image_width = 0;
  int tile = 0;
  double overlap = 0.0;
  std::vector<BBox> placements;
};

/// `align` forces every placement offset onto a multiple of it (feature-grid strides).
TilingPlan make_tiling_plan(int image_height, int image_width, int tile, double overlap, int align = 1);

/// Separable raised-cosine profile over n cells: sin^2(pi * (i + 0.5) / n). Strictly positive.
std::vector<double> hann_profile(int n);

/// Per-pixel blend weights over an image grid: out(y,x) = sum over placements of
/// w_p(y,x) * value_p(y,x), where w_p are the normalized raised-cosine weights.
/// `cell` scales placements into grid units (1 for pixels, the stride for feature grids).
class BlendWeights {
 public:
  BlendWeights(const TilingPlan& plan, int cell = 1);

  int grid_height() const noexcept { return grid_h_; }
  int grid_width() const noexcept { return grid_w_; }
  int cells_per_tile() const noexcept { return n_; }

  /// Normalized weight of placement p at tile-local cell (ty, tx).
  double weight(std::size_t p, int ty, int tx) const;
  /// Sum of raw profile weights over all placements covering grid cell (y, x).
  double raw_sum(int y, int x) const { return sums_[static_cast<std::size_t>(y) * grid_w_ + x]; }

  const TilingPlan& plan() const noexcept { return plan_; }

 private:
  TilingPlan plan_;
  int cell_ = 1;
  int n_ = 0;
  int grid_h_ = 0;
  int grid_w_ = 0;
  std::vector<double> profile_;
  std::vector<double> sums_;
};

/// Applies `per_tile` to each placement and blends the results with partition-of-unity
/// raised-cosine weights. `per_tile` must preserve the tile's spatial extent; the
/// channel count of its output defines the result's.
Raster tile_and_stitch(const Raster& image, int tile, double overlap,
                       const std::function<Raster(const Raster&)>& per_tile);

/// Copies a rectangular crop (all channels).
Raster crop(const Raster& r, const BBox& box);

}  // namespace univcd
