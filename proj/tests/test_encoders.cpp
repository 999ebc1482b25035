#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "helpers.hpp"
#include "univcd/encoders.hpp"
#include "univcd/io.hpp"

using namespace univcd;
using testing_util::random_raster;
using testing_util::small_encoders;
using testing_util::small_spatial;
using testing_util::TempDir;

namespace {

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

EncoderSet no_leak_encoders() {
  ToyEncoderOptions o;
  o.context_leak = 0.0;
  return make_toy_encoders(3, small_spatial(), testing_util::kSmallDsem, o);
}

}  // namespace

TEST(SpatialConfig, Validation) {
  EXPECT_NO_THROW(SpatialEncoderConfig{}.validate());
  EXPECT_THROW((SpatialEncoderConfig{64, {4, 4}, {8, 8}}.validate()), InvalidArgumentError);
  EXPECT_THROW((SpatialEncoderConfig{64, {4, 6}, {8, 8}}.validate()), InvalidArgumentError);
  EXPECT_THROW((SpatialEncoderConfig{60, {8}, {8}}.validate()), InvalidArgumentError);
  EXPECT_THROW((SpatialEncoderConfig{64, {4, 8}, {8}}.validate()), InvalidArgumentError);
  EXPECT_THROW((SpatialEncoderConfig{64, {4}, {0}}.validate()), InvalidArgumentError);
}

TEST(ToyEncoders, SpatialShapesFollowStrides) {
  const auto enc = small_encoders();
  const auto f = encode_spatial(*enc.spatial, random_raster(64, 64, 3, 1));
  ASSERT_EQ(f.levels.size(), 3u);
  for (int l = 0; l < 3; ++l) {
    EXPECT_EQ(f.levels[l].height(), 64 / small_spatial().strides[l]);
    EXPECT_EQ(f.levels[l].width(), 64 / small_spatial().strides[l]);
    EXPECT_EQ(f.levels[l].channels(), small_spatial().channels[l]);
    EXPECT_TRUE(f.levels[l].all_finite());
  }
  EXPECT_EQ(f.strides, small_spatial().strides);
}

TEST(ToyEncoders, DeterministicPerSeedAndFrozen) {
  const auto a = small_encoders(5);
  const auto b = small_encoders(5);
  const auto c = small_encoders(6);
  EXPECT_EQ(a.parameter_hash(), b.parameter_hash());
  EXPECT_EQ(a.fingerprint(), b.fingerprint());
  EXPECT_NE(a.parameter_hash(), c.parameter_hash());
  const Raster img = random_raster(64, 64, 3, 2);
  const auto before = a.parameter_hash();
  EXPECT_EQ(encode_spatial(*a.spatial, img).levels[1], encode_spatial(*b.spatial, img).levels[1]);
  (void)a.semantic->encode_dense(img);
  (void)a.text->encode("a road");
  EXPECT_EQ(a.parameter_hash(), before);
}

TEST(ToyEncoders, FingerprintTracksContextLeak) {
  ToyEncoderOptions o;
  o.context_leak = 0.25;
  EXPECT_NE(make_toy_encoders(5, small_spatial(), 16, o).fingerprint(), small_encoders(5).fingerprint());
}

TEST(ToySemantic, FlatWindowsEncodeToZero) {
  const auto enc = small_encoders();
  const Raster f = enc.semantic->encode_dense(Raster(32, 48, 3, 0.37));
  EXPECT_EQ(f.height(), 2);
  EXPECT_EQ(f.width(), 3);
  EXPECT_EQ(f.channels(), 16);
  for (double v : f.values()) EXPECT_EQ(v, 0.0);
}

TEST(ToySemantic, RejectsBadWindows) {
  const auto enc = small_encoders();
  EXPECT_THROW(enc.semantic->encode_dense(Raster(30, 32, 3)), InvalidArgumentError);
  EXPECT_THROW(enc.semantic->encode_dense(Raster(32, 32, 1)), InvalidArgumentError);
}

TEST(ToySemantic, PreimageReproducesTarget) {
  const auto enc = no_leak_encoders();
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> target(16);
  for (double& v : target) v = n(rng);
  const Raster tile = semantic_preimage(*enc.semantic, target);
  ASSERT_EQ(tile.height(), 16);
  // Offset the tile: the encoder ignores per-channel constants.
  Raster shifted = tile;
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      for (int c = 0; c < 3; ++c) shifted.at(y, x, c) += 0.5 + 0.1 * c;
    }
  }
  const Raster f = enc.semantic->encode_dense(shifted);
  for (int i = 0; i < 16; ++i) EXPECT_NEAR(f.at(0, 0, i), target[i], 1e-9);
}

TEST(ToySemantic, ContextTermIsSharedAcrossTheWindow) {
  const auto leak = small_encoders();
  const auto plain = make_toy_encoders(7, small_spatial(), 16, {16, 1 << 16, 0.0});
  const Raster img = random_raster(32, 32, 3, 4);
  const Raster a = leak.semantic->encode_dense(img);
  const Raster b = plain.semantic->encode_dense(img);
  std::vector<double> diff0(16);
  for (int i = 0; i < 16; ++i) diff0[i] = a.at(0, 0, i) - b.at(0, 0, i);
  EXPECT_GT(norm(diff0), 0.0);
  for (int y = 0; y < 2; ++y) {
    for (int x = 0; x < 2; ++x) {
      for (int i = 0; i < 16; ++i) EXPECT_NEAR(a.at(y, x, i) - b.at(y, x, i), diff0[i], 1e-12);
    }
  }
}

TEST(ToyText, TokenizationIgnoresCaseAndPunctuation) {
  const auto enc = small_encoders();
  EXPECT_EQ(enc.text->encode("A Road."), enc.text->encode("a road"));
  EXPECT_NE(enc.text->encode("a road"), enc.text->encode("a river"));
  EXPECT_EQ(enc.text->encode("").size(), 16u);
}

TEST(EmbedText, UnitNormTemplateAverage) {
  const auto enc = small_encoders();
  const std::vector<std::string> templates{"a photo of {}.", "an image of a {}"};
  const auto set = embed_text(*enc.text, {"road", "water"}, templates);
  ASSERT_EQ(set.size(), 2u);
  EXPECT_EQ(set.dim(), 16);
  EXPECT_EQ(set.index_of("water"), 1);
  EXPECT_THROW(set.index_of("lava"), InvalidArgumentError);
  // Oracle: mean of normalized template embeddings, renormalized.
  std::vector<double> mean(16, 0.0);
  for (const auto* t : {"a photo of road.", "an image of a road"}) {
    auto v = enc.text->encode(t);
    const double n = norm(v);
    for (int i = 0; i < 16; ++i) mean[i] += v[i] / n;
  }
  const double n = norm(mean);
  for (int i = 0; i < 16; ++i) EXPECT_NEAR(set.vectors[0][i], mean[i] / n, 1e-12);
  EXPECT_NEAR(norm(set.vectors[1]), 1.0, 1e-12);
  EXPECT_THROW(embed_text(*enc.text, {}, templates), InvalidArgumentError);
}

TEST(SlidingWindow, SingleWindowEqualsDenseEncode) {
  const auto enc = small_encoders();
  const Raster img = random_raster(32, 32, 3, 8);
  const auto f = sliding_window_encode(*enc.semantic, img, 32, 0.5);
  EXPECT_EQ(f.grid_stride, 16);
  const Raster dense = enc.semantic->encode_dense(img);
  ASSERT_TRUE(f.features.same_shape(dense));
  for (std::size_t i = 0; i < dense.size(); ++i) EXPECT_NEAR(f.features.values()[i], dense.values()[i], 1e-12);
}

TEST(SlidingWindow, WithoutContextTermMatchesDenseEverywhere) {
  // Content features are local to a patch, so blending windows reproduces the one-shot encoding.
  const auto enc = no_leak_encoders();
  const Raster img = random_raster(64, 64, 3, 9);
  const auto f = sliding_window_encode(*enc.semantic, img, 32, 0.5);
  const Raster dense = enc.semantic->encode_dense(img);
  ASSERT_TRUE(f.features.same_shape(dense));
  for (std::size_t i = 0; i < dense.size(); ++i) EXPECT_NEAR(f.features.values()[i], dense.values()[i], 1e-12);
  EXPECT_THROW(sliding_window_encode(*enc.semantic, img, 128, 0.5), InvalidArgumentError);
}

TEST(FeatureCache, StoreLookupAndPersist) {
  TempDir dir;
  CachedFeatures f;
  f.spatial.levels = {random_raster(4, 4, 2, 1), random_raster(2, 2, 3, 2)};
  f.semantic.features = random_raster(2, 2, 5, 3);
  for (auto* r : {&f.spatial.levels[0], &f.spatial.levels[1], &f.semantic.features}) {
    for (double& v : r->values()) v = static_cast<float>(v);
  }
  {
    FeatureCache cache(dir.path());
    EXPECT_FALSE(cache.lookup("img", "fp", 128, 0.5));
    cache.store("img", "fp", 128, 0.5, f);
  }
  FeatureCache reopened(dir.path());
  const auto hit = reopened.lookup("img", "fp", 128, 0.5);
  ASSERT_TRUE(hit);
  EXPECT_EQ(hit->spatial.levels, f.spatial.levels);
  EXPECT_EQ(hit->semantic.features, f.semantic.features);
  EXPECT_FALSE(reopened.lookup("img", "other", 128, 0.5));
  EXPECT_FALSE(reopened.lookup("img", "fp", 64, 0.5));
  EXPECT_TRUE(std::filesystem::exists(dir / "img.spatial.1.uvcd"));
  std::ifstream manifest(dir / "manifest.txt");
  std::string line;
  std::getline(manifest, line);
  EXPECT_EQ(line, "img\tfp\t128\t0.5");
}
