#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace univcd {

// Error categories double as the CLI exit-status taxonomy (see univcd.h).
enum class ErrorCode : int {
  kInvalidArgument = 1,
  kConfig = 2,
  kData = 3,
  kModel = 4,
  kRefiner = 5,
  kIo = 6,
  kDegenerateInput = 7,
  kUnsupported = 8,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

#define UNIVCD_DEFINE_ERROR(Name, Code)                                  \
  class Name : public Error {                                            \
   public:                                                               \
    explicit Name(const std::string& what) : Error(ErrorCode::Code, what) {} \
  };

UNIVCD_DEFINE_ERROR(InvalidArgumentError, kInvalidArgument)
UNIVCD_DEFINE_ERROR(ConfigError, kConfig)
UNIVCD_DEFINE_ERROR(DataError, kData)
UNIVCD_DEFINE_ERROR(ModelError, kModel)
UNIVCD_DEFINE_ERROR(RefinerError, kRefiner)
UNIVCD_DEFINE_ERROR(IoError, kIo)
UNIVCD_DEFINE_ERROR(DegenerateInputError, kDegenerateInput)
UNIVCD_DEFINE_ERROR(UnsupportedError, kUnsupported)

#undef UNIVCD_DEFINE_ERROR

/// H x W x C grid of reals, row-major with the channel index innermost.
class Raster {
 public:
  Raster() = default;
  Raster(int height, int width, int channels, double fill = 0.0);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int channels() const noexcept { return channels_; }
  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_);
  }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double& at(int row, int col, int ch) { return values_[index(row, col, ch)]; }
  double at(int row, int col, int ch) const { return values_[index(row, col, ch)]; }

  double* pixel(int row, int col) { return values_.data() + index(row, col, 0); }
  const double* pixel(int row, int col) const { return values_.data() + index(row, col, 0); }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }

  bool same_shape(const Raster& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }
  bool same_extent(const Raster& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_;
  }

  bool all_finite() const noexcept;

  /// Copies channel `ch` into a single-channel raster.
  Raster channel(int ch) const;

  friend bool operator==(const Raster& a, const Raster& b) {
    return a.same_shape(b) && a.values_ == b.values_;
  }

 private:
  std::size_t index(int row, int col, int ch) const noexcept {
    return (static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) +
            static_cast<std::size_t>(col)) *
               static_cast<std::size_t>(channels_) +
           static_cast<std::size_t>(ch);
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> values_;
};

class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int height, int width, bool fill = false);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t pixel_count() const noexcept { return values_.size(); }

  bool at(int row, int col) const { return values_[index(row, col)] != 0; }
  void set(int row, int col, bool on = true) { values_[index(row, col)] = on ? 1 : 0; }

  std::span<std::uint8_t> values() noexcept { return values_; }
  std::span<const std::uint8_t> values() const noexcept { return values_; }

  std::size_t count() const noexcept;
  bool same_extent(const BinaryMask& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_;
  }

  BinaryMask& operator|=(const BinaryMask& other);
  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  std::size_t index(int row, int col) const noexcept {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(col);
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> values_;
};

/// Inclusive pixel bounds.
struct BBox {
  int row_min = 0;
  int col_min = 0;
  int row_max = 0;
  int col_max = 0;

  int height() const noexcept { return row_max - row_min + 1; }
  int width() const noexcept { return col_max - col_min + 1; }
  bool contains(int row, int col) const noexcept {
    return row >= row_min && row <= row_max && col >= col_min && col <= col_max;
  }
  friend bool operator==(const BBox&, const BBox&) = default;
};

enum class Polarity { kPositive, kNegative };

struct PointPrompt {
  int row = 0;
  int col = 0;
  Polarity polarity = Polarity::kPositive;
};

/// IoU of two equally sized masks; 0 when both are empty.
double mask_iou(const BinaryMask& a, const BinaryMask& b);

/// Resamples with half-pixel centers and clamp-to-edge sampling.
Raster bilinear_resize(const Raster& r, int out_height, int out_width);

/// Affine rescale of a single-channel raster onto [0, 1]. Constant input maps to zeros.
Raster minmax_normalize(const Raster& r);

/// Per-pixel L2 normalization of channel vectors. Zero vectors stay zero.
void normalize_pixels(Raster& r);

/// 64-bit FNV-1a over raw bytes; used for content fingerprints.
std::uint64_t fnv1a(std::span<const std::uint8_t> bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t content_hash(const Raster& r);
std::string hex64(std::uint64_t v);

}  // namespace univcd
