#include "univcd/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "univcd/io.hpp"

namespace univcd {
namespace {

std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

SyntheticWorld::SyntheticWorld(const EncoderSet& encoders, SyntheticWorldOptions options)
    : options_(std::move(options)) {
  if (options_.categories.empty()) throw InvalidArgumentError("synthetic world needs at least one category");
  if (options_.min_rect < 1 || options_.max_rect < options_.min_rect || options_.max_rect > options_.size) {
    throw InvalidArgumentError("synthetic world: bad rectangle size range");
  }
  if (options_.min_rects < 0 || options_.max_rects < options_.min_rects) {
    throw InvalidArgumentError("synthetic world: bad rectangle count range");
  }
  patch_ = encoders.semantic->stride();
  const auto text = embed_text(*encoders.text, options_.categories, default_prompt_templates());
  const auto contrast = embed_text(*encoders.text, options_.contrast, default_prompt_templates());
  std::vector<double> mean(static_cast<std::size_t>(text.dim()), 0.0);
  for (const auto& v : contrast.vectors) {
    for (std::size_t i = 0; i < v.size(); ++i) mean[i] += v[i] / static_cast<double>(contrast.size());
  }
  const auto key = [&](const std::vector<double>& t) {
    std::vector<double> k = t;
    for (std::size_t i = 0; i < k.size(); ++i) k[i] -= mean[i];
    return k;
  };
  for (std::size_t c = 0; c < options_.categories.size(); ++c) {
    textures_.push_back(texture_for(encoders, key(text.vectors[c]), options_.texture_std));
  }
  background_texture_ = Raster(patch_, patch_, 3);
  if (!options_.background.empty() && options_.background_texture_std > 0.0) {
    const auto bg = embed_text(*encoders.text, {options_.background}, default_prompt_templates());
    background_texture_ = texture_for(encoders, key(bg.vectors[0]), options_.background_texture_std);
  }
  // Mean colors only reach the spatial encoder; the semantic projection ignores them.
  std::mt19937_64 rng(mix(encoders.parameter_hash(), 17));
  std::uniform_real_distribution<double> tint(0.35, 0.65);
  for (std::size_t c = 0; c < options_.categories.size(); ++c) tints_.push_back({tint(rng), tint(rng), tint(rng)});
}

Raster SyntheticWorld::texture_for(const EncoderSet& encoders, const std::vector<double>& key,
                                   double std_dev) const {
  Raster tile = semantic_preimage(*encoders.semantic, key);
  double sq = 0.0;
  for (double v : tile.values()) sq += v * v;
  const double scale = std_dev * std::sqrt(static_cast<double>(tile.size()) / sq);
  for (double& v : tile.values()) v *= scale;
  return tile;
}

std::vector<SyntheticWorld::Rect> SyntheticWorld::random_rects(std::mt19937_64& rng) const {
  std::uniform_int_distribution<int> count(options_.min_rects, options_.max_rects);
  std::uniform_int_distribution<int> side(options_.min_rect, options_.max_rect);
  std::uniform_int_distribution<int> category(0, static_cast<int>(options_.categories.size()) - 1);
  std::vector<Rect> rects;
  const int n = count(rng);
  for (int i = 0; i < n; ++i) {
    const int h = side(rng);
    const int w = side(rng);
    std::uniform_int_distribution<int> row(0, options_.size - h);
    std::uniform_int_distribution<int> col(0, options_.size - w);
    const int r0 = row(rng);
    const int c0 = col(rng);
    rects.push_back({{r0, c0, r0 + h - 1, c0 + w - 1}, category(rng)});
  }
  return rects;
}

Raster SyntheticWorld::render(const std::vector<Rect>& rects, double background, double brightness,
                              std::mt19937_64& rng, std::vector<int>* labels) const {
  const int n = options_.size;
  Raster img(n, n, 3);
  std::vector<int> lab(static_cast<std::size_t>(n) * n, -1);
  for (const auto& r : rects) {
    for (int y = r.box.row_min; y <= r.box.row_max; ++y) {
      for (int x = r.box.col_min; x <= r.box.col_max; ++x) lab[static_cast<std::size_t>(y) * n + x] = r.category;
    }
  }
  std::normal_distribution<double> noise(0.0, options_.pixel_noise);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const int c = lab[static_cast<std::size_t>(y) * n + x];
      double* px = img.pixel(y, x);
      for (int ch = 0; ch < 3; ++ch) {
        double v = background + background_texture_.at(y % patch_, x % patch_, ch);
        if (c >= 0) v = tints_[c][ch] + textures_[c].at(y % patch_, x % patch_, ch);
        v += brightness;
        if (options_.pixel_noise > 0.0) v += noise(rng);
        px[ch] = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  if (labels) *labels = std::move(lab);
  return img;
}

Raster SyntheticWorld::make_scene(std::uint64_t seed) const {
  std::mt19937_64 rng(mix(seed, 1));
  std::uniform_real_distribution<double> bg(0.3, 0.7);
  const double background = bg(rng);
  const auto rects = random_rects(rng);
  return render(rects, background, 0.0, rng, nullptr);
}

SyntheticPair SyntheticWorld::make_pair(std::uint64_t seed, const std::string& name) const {
  std::mt19937_64 rng(mix(seed, 2));
  std::uniform_real_distribution<double> bg(0.3, 0.7);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double background = bg(rng);
  const auto before = random_rects(rng);

  std::vector<Rect> after;
  std::uniform_int_distribution<int> category(0, static_cast<int>(options_.categories.size()) - 1);
  for (const auto& r : before) {
    const double u = unit(rng);
    if (u < 0.3) continue;  // removed
    Rect kept = r;
    if (u > 0.85) kept.category = category(rng);  // land-cover transition
    after.push_back(kept);
  }
  const int target = [&] {
    const auto it = std::find(options_.categories.begin(), options_.categories.end(), options_.target);
    if (it == options_.categories.end()) throw InvalidArgumentError("synthetic world: unknown target category");
    return static_cast<int>(it - options_.categories.begin());
  }();
  auto added = random_rects(rng);
  added.resize(std::min<std::size_t>(added.size(), 2));
  for (auto& r : added) {
    if (unit(rng) < 0.5) r.category = target;
    after.push_back(r);
  }

  std::uniform_real_distribution<double> jitter(-options_.brightness_jitter, options_.brightness_jitter);
  SyntheticPair pair;
  pair.name = name;
  pair.t1 = render(before, background, 0.0, rng, &pair.labels1);
  pair.t2 = render(after, background, options_.brightness_jitter > 0.0 ? jitter(rng) : 0.0, rng, &pair.labels2);
  pair.change = BinaryMask(options_.size, options_.size);
  for (int y = 0; y < options_.size; ++y) {
    for (int x = 0; x < options_.size; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * options_.size + x;
      pair.change.set(y, x, (pair.labels1[i] == target) != (pair.labels2[i] == target));
    }
  }
  return pair;
}

void write_synthetic_dataset(const std::filesystem::path& dir, const SyntheticWorld& world, int pairs,
                             int train_scenes, std::uint64_t seed) {
  if (pairs < 0 || train_scenes < 0) throw InvalidArgumentError("synthetic dataset: negative count");
  for (const char* sub : {"A", "B", "label", "train"}) std::filesystem::create_directories(dir / sub);
  char name[32];
  for (int i = 0; i < pairs; ++i) {
    std::snprintf(name, sizeof name, "pair_%03d", i);
    const auto pair = world.make_pair(mix(seed, static_cast<std::uint64_t>(i)), name);
    save_png(dir / "A" / (pair.name + ".png"), pair.t1);
    save_png(dir / "B" / (pair.name + ".png"), pair.t2);
    save_mask_png(dir / "label" / (pair.name + ".png"), pair.change);
  }
  for (int i = 0; i < train_scenes; ++i) {
    std::snprintf(name, sizeof name, "scene_%03d.png", i);
    save_png(dir / "train" / name, world.make_scene(mix(seed ^ 0x7a11ULL, static_cast<std::uint64_t>(i))));
  }
}

}  // namespace univcd
