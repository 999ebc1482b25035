#include "univcd/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "resample.hpp"

namespace univcd {

Raster::Raster(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels) {
  if (height < 1 || width < 1 || channels < 1) {
    throw InvalidArgumentError("raster dimensions must be positive, got " + std::to_string(height) +
                               "x" + std::to_string(width) + "x" + std::to_string(channels));
  }
  values_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

bool Raster::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

Raster Raster::channel(int ch) const {
  if (ch < 0 || ch >= channels_) throw InvalidArgumentError("channel index out of range");
  Raster out(height_, width_, 1);
  for (std::size_t p = 0; p < pixel_count(); ++p) out.values_[p] = values_[p * channels_ + ch];
  return out;
}

BinaryMask::BinaryMask(int height, int width, bool fill) : height_(height), width_(width) {
  if (height < 1 || width < 1) throw InvalidArgumentError("mask dimensions must be positive");
  values_.assign(static_cast<std::size_t>(height) * width, fill ? 1 : 0);
}

std::size_t BinaryMask::count() const noexcept {
  return static_cast<std::size_t>(std::count(values_.begin(), values_.end(), std::uint8_t{1}));
}

BinaryMask& BinaryMask::operator|=(const BinaryMask& other) {
  if (!same_extent(other)) throw InvalidArgumentError("mask union: shape mismatch");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] |= other.values_[i];
  return *this;
}

double mask_iou(const BinaryMask& a, const BinaryMask& b) {
  if (!a.same_extent(b)) throw InvalidArgumentError("mask IoU: shape mismatch");
  std::size_t inter = 0, uni = 0;
  auto va = a.values();
  auto vb = b.values();
  for (std::size_t i = 0; i < va.size(); ++i) {
    inter += va[i] & vb[i];
    uni += va[i] | vb[i];
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

Raster bilinear_resize(const Raster& r, int out_height, int out_width) {
  if (out_height < 1 || out_width < 1) {
    throw InvalidArgumentError("bilinear_resize: target size must be positive");
  }
  if (out_height == r.height() && out_width == r.width()) return r;
  const auto rows = detail::linear_taps(r.height(), out_height);
  const auto cols = detail::linear_taps(r.width(), out_width);
  const int nc = r.channels();
  Raster out(out_height, out_width, nc);
  for (int y = 0; y < out_height; ++y) {
    const auto& ty = rows[y];
    for (int x = 0; x < out_width; ++x) {
      const auto& tx = cols[x];
      const double* p00 = r.pixel(ty.i0, tx.i0);
      const double* p01 = r.pixel(ty.i0, tx.i1);
      const double* p10 = r.pixel(ty.i1, tx.i0);
      const double* p11 = r.pixel(ty.i1, tx.i1);
      double* o = out.pixel(y, x);
      for (int c = 0; c < nc; ++c) {
        // lerp form keeps constant fields exact
        const double top = p00[c] + tx.w1 * (p01[c] - p00[c]);
        const double bottom = p10[c] + tx.w1 * (p11[c] - p10[c]);
        o[c] = top + ty.w1 * (bottom - top);
      }
    }
  }
  return out;
}

Raster minmax_normalize(const Raster& r) {
  if (r.channels() != 1) throw InvalidArgumentError("minmax_normalize expects a single-channel raster");
  const auto [lo_it, hi_it] = std::minmax_element(r.values().begin(), r.values().end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  Raster out(r.height(), r.width(), 1);
  if (!(hi > lo)) return out;
  const double range = hi - lo;
  auto src = r.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = (src[i] - lo) / range;
  return out;
}

void normalize_pixels(Raster& r) {
  const int nc = r.channels();
  for (int y = 0; y < r.height(); ++y) {
    for (int x = 0; x < r.width(); ++x) {
      double* p = r.pixel(y, x);
      double sq = 0.0;
      for (int c = 0; c < nc; ++c) sq += p[c] * p[c];
      if (sq <= 0.0) continue;
      const double inv = 1.0 / std::sqrt(sq);
      for (int c = 0; c < nc; ++c) p[c] *= inv;
    }
  }
}

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t content_hash(const Raster& r) {
  const std::uint32_t dims[3] = {static_cast<std::uint32_t>(r.height()),
                                 static_cast<std::uint32_t>(r.width()),
                                 static_cast<std::uint32_t>(r.channels())};
  std::uint64_t h = fnv1a({reinterpret_cast<const std::uint8_t*>(dims), sizeof(dims)});
  return fnv1a({reinterpret_cast<const std::uint8_t*>(r.data()), r.size() * sizeof(double)}, h);
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

}  // namespace univcd
