#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "univcd/core.hpp"

namespace univcd {

struct SpatialEncoderConfig {
  int input_size = 256;
  std::vector<int> strides{4, 8, 16};
  std::vector<int> channels{32, 64, 128};

  /// Throws InvalidArgumentError unless strides strictly increase, each stride divides the
  /// next and the input size, and every channel count is positive.
  void validate() const;
  int levels() const noexcept { return static_cast<int>(strides.size()); }
  friend bool operator==(const SpatialEncoderConfig&, const SpatialEncoderConfig&) = default;
};

/// Spatial encoder output, finest level first.
struct MultiScaleFeatures {
  std::vector<Raster> levels;
  std::vector<int> strides;
};

struct SemanticFeatureMap {
  Raster features;
  int grid_stride = 1;
};

struct TextEmbeddingSet {
  std::vector<std::string> categories;
  std::vector<std::vector<double>> vectors;

  int dim() const noexcept { return vectors.empty() ? 0 : static_cast<int>(vectors.front().size()); }
  std::size_t size() const noexcept { return categories.size(); }
  int index_of(const std::string& category) const;
};

// Frozen encoders expose read-only encode calls only; nothing here mutates parameters.
class FrozenEncoder {
 public:
  virtual ~FrozenEncoder() = default;
  virtual std::string fingerprint() const = 0;
  virtual std::size_t parameter_count() const = 0;
  virtual std::uint64_t parameter_hash() const = 0;
};

class SpatialEncoder : public FrozenEncoder {
 public:
  virtual const SpatialEncoderConfig& config() const = 0;
  virtual MultiScaleFeatures encode(const Raster& image) const = 0;
};

class SemanticImageEncoder : public FrozenEncoder {
 public:
  virtual int dim() const = 0;
  /// Pixels per output feature cell.
  virtual int stride() const = 0;
  /// Dense features of one window: (h / stride) x (w / stride) x dim.
  virtual Raster encode_dense(const Raster& window) const = 0;
};

class TextEncoder : public FrozenEncoder {
 public:
  virtual int dim() const = 0;
  virtual std::vector<double> encode(const std::string& text) const = 0;
};

struct EncoderSet {
  std::shared_ptr<const SpatialEncoder> spatial;
  std::shared_ptr<const SemanticImageEncoder> semantic;
  std::shared_ptr<const TextEncoder> text;

  std::string fingerprint() const;
  std::size_t parameter_count() const;
  /// Combined hash of every frozen parameter; stable across encode calls.
  std::uint64_t parameter_hash() const;
};

struct ToyEncoderOptions {
  int patch = 16;
  int text_buckets = 1 << 16;
  /// Strength of the window-level context term in the toy semantic encoder (0 disables it).
  double context_leak = 1.0;
};

/// Deterministic stand-ins for the frozen foundation encoders:
///  - spatial: strided random convolutions with tanh, one per level (zero biases);
///  - semantic: random zero-mean patch projection at stride `patch`, plus a window-level
///    context term shared by all cells of a window;
///  - text: hashed-token embedding table, summed over tokens.
EncoderSet make_toy_encoders(std::uint64_t seed, const SpatialEncoderConfig& config, int d_sem,
                             const ToyEncoderOptions& options = {});

/// Least-norm patch (patch x patch x 3, zero-mean per channel) whose toy semantic feature is
/// `target`. Throws UnsupportedError for non-toy encoders.
Raster semantic_preimage(const SemanticImageEncoder& encoder, const std::vector<double>& target);

MultiScaleFeatures encode_spatial(const SpatialEncoder& encoder, const Raster& image);

/// Window-wise dense semantic encoding blended with raised-cosine weights that are
/// renormalized per feature cell. Window placements follow make_tiling_plan, aligned to the
/// encoder stride.
SemanticFeatureMap sliding_window_encode(const SemanticImageEncoder& encoder, const Raster& image,
                                         int window, double overlap_ratio);

std::vector<std::string> default_prompt_templates();
std::vector<std::string> default_bcd_categories();

/// Instantiates every template ("{}" is replaced by the category), normalizes each
/// embedding, averages per category and renormalizes.
TextEmbeddingSet embed_text(const TextEncoder& encoder, const std::vector<std::string>& categories,
                            const std::vector<std::string>& templates);

struct CachedFeatures {
  MultiScaleFeatures spatial;
  SemanticFeatureMap semantic;
};

/// On-disk cache of frozen encoder outputs:
///   <id>.spatial.<level>.uvcd, <id>.semantic.uvcd, and manifest.txt with one
///   "<id>\t<fingerprint>\t<window>\t<overlap>" line per entry.
class FeatureCache {
 public:
  explicit FeatureCache(std::filesystem::path dir);

  /// Stored rasters only; callers fill in strides from their encoder configuration.
  std::optional<CachedFeatures> lookup(const std::string& image_id, const std::string& fingerprint,
                                       int window, double overlap) const;
  void store(const std::string& image_id, const std::string& fingerprint, int window, double overlap,
             const CachedFeatures& features);
  const std::filesystem::path& dir() const noexcept { return dir_; }

 private:
  struct Entry {
    std::string fingerprint;
    int window = 0;
    double overlap = 0.0;
  };
  void write_manifest() const;

  std::filesystem::path dir_;
  std::vector<std::pair<std::string, Entry>> entries_;
};

}  // namespace univcd
