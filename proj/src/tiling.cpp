#include "univcd/tiling.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace univcd {
namespace {

std::vector<int> axis_offsets(int size, int tile, int step) {
  std::vector<int> offsets;
  for (int pos = 0;; pos += step) {
    if (pos + tile >= size) {
      offsets.push_back(size - tile);
      break;
    }
    offsets.push_back(pos);
  }
  offsets.erase(std::unique(offsets.begin(), offsets.end()), offsets.end());
  return offsets;
}

}  // namespace

TilingPlan make_tiling_plan(int image_height, int image_width, int tile, double overlap, int align) {
  if (tile < 1) throw InvalidArgumentError("tiling: tile must be positive");
  if (tile > image_height || tile > image_width) {
    throw InvalidArgumentError("tiling: tile " + std::to_string(tile) + " exceeds image " +
                               std::to_string(image_height) + "x" + std::to_string(image_width));
  }
  if (!(overlap >= 0.0 && overlap < 1.0)) throw InvalidArgumentError("tiling: overlap must be in [0, 1)");
  if (align < 1 || tile % align != 0 || image_height % align != 0 || image_width % align != 0) {
    throw InvalidArgumentError("tiling: tile and image extents must be multiples of the alignment");
  }
  int step = tile - static_cast<int>(std::floor(tile * overlap));
  step = std::max(align, step / align * align);

  TilingPlan plan{image_height, image_width, tile, overlap, {}};
  for (int r : axis_offsets(image_height, tile, step)) {
    for (int c : axis_offsets(image_width, tile, step)) {
      plan.placements.push_back({r, c, r + tile - 1, c + tile - 1});
    }
  }
  return plan;
}

std::vector<double> hann_profile(int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double s = std::sin(std::numbers::pi * (i + 0.5) / n);
    w[i] = s * s;
  }
  return w;
}

BlendWeights::BlendWeights(const TilingPlan& plan, int cell)
    : plan_(plan), cell_(cell), n_(plan.tile / cell), grid_h_(plan.image_height / cell),
      grid_w_(plan.image_width / cell), profile_(hann_profile(plan.tile / cell)) {
  sums_.assign(static_cast<std::size_t>(grid_h_) * grid_w_, 0.0);
  for (const auto& box : plan_.placements) {
    const int r0 = box.row_min / cell_;
    const int c0 = box.col_min / cell_;
    for (int ty = 0; ty < n_; ++ty) {
      for (int tx = 0; tx < n_; ++tx) {
        sums_[static_cast<std::size_t>(r0 + ty) * grid_w_ + (c0 + tx)] += profile_[ty] * profile_[tx];
      }
    }
  }
}

double BlendWeights::weight(std::size_t p, int ty, int tx) const {
  const auto& box = plan_.placements[p];
  const int y = box.row_min / cell_ + ty;
  const int x = box.col_min / cell_ + tx;
  return profile_[ty] * profile_[tx] / raw_sum(y, x);
}

Raster crop(const Raster& r, const BBox& box) {
  if (box.row_min < 0 || box.col_min < 0 || box.row_max >= r.height() || box.col_max >= r.width() ||
      box.row_min > box.row_max || box.col_min > box.col_max) {
    throw InvalidArgumentError("crop: box outside raster");
  }
  Raster out(box.height(), box.width(), r.channels());
  const std::size_t row_len = static_cast<std::size_t>(box.width()) * r.channels();
  for (int y = 0; y < box.height(); ++y) {
    std::copy_n(r.pixel(box.row_min + y, box.col_min), row_len, out.pixel(y, 0));
  }
  return out;
}

Raster tile_and_stitch(const Raster& image, int tile, double overlap,
                       const std::function<Raster(const Raster&)>& per_tile) {
  const auto plan = make_tiling_plan(image.height(), image.width(), tile, overlap);
  const BlendWeights blend(plan);
  Raster out;
  // Placements are reduced in plan order, so the result is independent of scheduling.
  for (std::size_t p = 0; p < plan.placements.size(); ++p) {
    const auto& box = plan.placements[p];
    const Raster piece = per_tile(crop(image, box));
    if (piece.height() != tile || piece.width() != tile) {
      throw InvalidArgumentError("tile_and_stitch: per-tile operation changed the spatial extent");
    }
    if (out.empty()) out = Raster(image.height(), image.width(), piece.channels());
    if (piece.channels() != out.channels()) {
      throw InvalidArgumentError("tile_and_stitch: inconsistent per-tile channel counts");
    }
    const int nc = out.channels();
    for (int ty = 0; ty < tile; ++ty) {
      for (int tx = 0; tx < tile; ++tx) {
        const double w = blend.weight(p, ty, tx);
        const double* src = piece.pixel(ty, tx);
        double* dst = out.pixel(box.row_min + ty, box.col_min + tx);
        for (int c = 0; c < nc; ++c) dst[c] += w * src[c];
      }
    }
  }
  return out;
}

}  // namespace univcd
