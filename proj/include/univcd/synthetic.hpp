#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "univcd/core.hpp"
#include "univcd/encoders.hpp"

namespace univcd {

/// Toy scenes: a uniform background field with textured rectangles. A category's texture is the toy
/// semantic encoder's preimage of that category's text embedding minus the mean embedding of
/// the contrast set, so the frozen features point where the category beats its competitors.
struct SyntheticWorldOptions {
  int size = 256;
  std::vector<std::string> categories{"architecture", "road", "vegetation", "water"};
  std::string target = "architecture";
  std::vector<std::string> contrast = default_bcd_categories();
  /// Land cover of the uniform background; empty leaves it perfectly flat (zero semantics).
  std::string background = "bare ground";
  double background_texture_std = 0.05;
  int min_rect = 32;
  int max_rect = 80;
  int min_rects = 3;
  int max_rects = 6;
  /// Per-pixel standard deviation of the category textures.
  double texture_std = 0.12;
  double pixel_noise = 0.0;
  /// Global brightness offset drawn from [-b, b] for the second epoch.
  double brightness_jitter = 0.03;
};

struct SyntheticPair {
  std::string name;
  Raster t1;
  Raster t2;
  /// Per-pixel category index (into SyntheticWorldOptions::categories), -1 for background.
  std::vector<int> labels1;
  std::vector<int> labels2;
  /// Pixels where exactly one epoch shows the target category.
  BinaryMask change;
};

class SyntheticWorld {
 public:
  SyntheticWorld(const EncoderSet& encoders, SyntheticWorldOptions options = {});

  const SyntheticWorldOptions& options() const noexcept { return options_; }
  /// Texture tile (patch x patch x 3, zero mean) of category c.
  const Raster& texture(int c) const { return textures_.at(static_cast<std::size_t>(c)); }

  /// Single scene for unpaired training.
  Raster make_scene(std::uint64_t seed) const;
  SyntheticPair make_pair(std::uint64_t seed, const std::string& name) const;

 private:
  struct Rect {
    BBox box;
    int category;
  };

  std::vector<Rect> random_rects(std::mt19937_64& rng) const;
  Raster render(const std::vector<Rect>& rects, double background, double brightness, std::mt19937_64& rng,
                std::vector<int>* labels) const;

  SyntheticWorldOptions options_;
  int patch_ = 16;
  Raster texture_for(const EncoderSet& encoders, const std::vector<double>& key, double std_dev) const;

  std::vector<Raster> textures_;
  Raster background_texture_;
  std::vector<std::array<double, 3>> tints_;
};

/// Writes <dir>/{A,B,label}/<name>.png plus a train/ folder of unpaired scenes.
void write_synthetic_dataset(const std::filesystem::path& dir, const SyntheticWorld& world, int pairs,
                             int train_scenes, std::uint64_t seed);

}  // namespace univcd
