#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "helpers.hpp"
#include "univcd/io.hpp"
#include "univcd/tiling.hpp"

using namespace univcd;
using testing_util::random_mask;
using testing_util::random_raster;
using testing_util::TempDir;

TEST(Raster, LayoutIsChannelInnermost) {
  Raster r(2, 3, 4);
  r.at(1, 2, 3) = 5.0;
  EXPECT_EQ(r.values()[(1 * 3 + 2) * 4 + 3], 5.0);
  EXPECT_EQ(r.channel(3).at(1, 2, 0), 5.0);
  EXPECT_THROW(Raster(-1, 2, 1), InvalidArgumentError);
}

TEST(Raster, AllFiniteSeesNaN) {
  Raster r(2, 2, 1, 1.0);
  EXPECT_TRUE(r.all_finite());
  r.at(0, 1, 0) = std::nan("");
  EXPECT_FALSE(r.all_finite());
}

TEST(MaskIou, HandComputed) {
  BinaryMask a(2, 2), b(2, 2);
  a.set(0, 0);
  a.set(0, 1);
  b.set(0, 1);
  b.set(1, 1);
  EXPECT_DOUBLE_EQ(mask_iou(a, b), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(mask_iou(BinaryMask(2, 2), BinaryMask(2, 2)), 0.0);
  EXPECT_THROW(mask_iou(a, BinaryMask(3, 2)), InvalidArgumentError);
}

TEST(MaskIou, SymmetricAndBounded) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto a = random_mask(9, 7, 0.4, s);
    const auto b = random_mask(9, 7, 0.4, s + 1000);
    const double v = mask_iou(a, b);
    EXPECT_EQ(v, mask_iou(b, a));
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
    if (a.count() > 0) EXPECT_EQ(mask_iou(a, a), 1.0);
  }
}

TEST(BilinearResize, ConstantFieldStaysExact) {
  Raster r(5, 7, 2, 0.375);
  const Raster up = bilinear_resize(r, 13, 4);
  for (double v : up.values()) EXPECT_EQ(v, 0.375);
}

TEST(BilinearResize, IntegerUpsampleInterpolatesBetweenCenters) {
  // 1D ramp 0,1 upsampled x2 with half-pixel centers: 0, 0.25, 0.75, 1.
  Raster r(1, 2, 1);
  r.at(0, 1, 0) = 1.0;
  const Raster up = bilinear_resize(r, 1, 4);
  EXPECT_NEAR(up.at(0, 0, 0), 0.0, 1e-15);
  EXPECT_NEAR(up.at(0, 1, 0), 0.25, 1e-15);
  EXPECT_NEAR(up.at(0, 2, 0), 0.75, 1e-15);
  EXPECT_NEAR(up.at(0, 3, 0), 1.0, 1e-15);
}

TEST(BilinearResize, AveragesOnEvenDownsample) {
  const Raster r = random_raster(8, 8, 1, 3);
  const Raster down = bilinear_resize(r, 4, 4);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) {
      const double mean = 0.25 * (r.at(2 * y, 2 * x, 0) + r.at(2 * y + 1, 2 * x, 0) + r.at(2 * y, 2 * x + 1, 0) +
                                  r.at(2 * y + 1, 2 * x + 1, 0));
      EXPECT_NEAR(down.at(y, x, 0), mean, 1e-12);
    }
  }
}

TEST(MinmaxNormalize, MapsOntoUnitInterval) {
  Raster r(1, 3, 1);
  r.at(0, 0, 0) = -2.0;
  r.at(0, 1, 0) = 0.0;
  r.at(0, 2, 0) = 2.0;
  const Raster n = minmax_normalize(r);
  EXPECT_EQ(n.at(0, 0, 0), 0.0);
  EXPECT_EQ(n.at(0, 1, 0), 0.5);
  EXPECT_EQ(n.at(0, 2, 0), 1.0);
  const Raster flat = minmax_normalize(Raster(3, 3, 1, 4.0));
  for (double v : flat.values()) EXPECT_EQ(v, 0.0);
}

TEST(NormalizePixels, UnitNormAndZeroStaysZero) {
  Raster r = random_raster(4, 4, 5, 11, -1.0, 1.0);
  for (int c = 0; c < 5; ++c) r.at(2, 3, c) = 0.0;
  normalize_pixels(r);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) {
      double sq = 0.0;
      for (int c = 0; c < 5; ++c) sq += r.at(y, x, c) * r.at(y, x, c);
      EXPECT_NEAR(sq, (y == 2 && x == 3) ? 0.0 : 1.0, 1e-12);
    }
  }
}

TEST(Fnv1a, KnownVectors) {
  // Reference values of 64-bit FNV-1a.
  EXPECT_EQ(fnv1a({}), 0xcbf29ce484222325ULL);
  const std::uint8_t a[] = {'a'};
  EXPECT_EQ(fnv1a(a), 0xaf63dc4c8601ec8cULL);
  const std::uint8_t foobar[] = {'f', 'o', 'o', 'b', 'a', 'r'};
  EXPECT_EQ(fnv1a(foobar), 0x85944171f73967e8ULL);
  EXPECT_EQ(hex64(0xabcULL), "0000000000000abc");
}

TEST(RasterContainer, HeaderLayoutAndRoundTrip) {
  Raster r = random_raster(3, 5, 2, 1);
  for (double& v : r.values()) v = static_cast<float>(v);
  std::stringstream buf;
  write_raster(buf, r);
  const std::string bytes = buf.str();
  ASSERT_EQ(bytes.size(), kRasterHeaderBytes + r.size() * 4);
  EXPECT_EQ(bytes.substr(0, 4), "UVCD");
  std::uint32_t dims[3];
  std::memcpy(dims, bytes.data() + 4, 12);
  EXPECT_EQ(dims[0], 3u);
  EXPECT_EQ(dims[1], 5u);
  EXPECT_EQ(dims[2], 2u);
  float first;
  std::memcpy(&first, bytes.data() + 16, 4);
  EXPECT_EQ(first, static_cast<float>(r.values()[0]));
  std::stringstream in(bytes);
  EXPECT_EQ(read_raster(in), r);
}

TEST(RasterContainer, RejectsBadMagicAndTruncation) {
  std::stringstream bad("XXXX0000000000000000");
  EXPECT_THROW(read_raster(bad), IoError);
  std::stringstream buf;
  write_raster(buf, Raster(2, 2, 1, 1.0));
  std::stringstream cut(buf.str().substr(0, buf.str().size() - 3));
  EXPECT_THROW(read_raster(cut), IoError);
}

TEST(Png, MaskRoundTripAndGrayImage) {
  TempDir dir;
  const auto m = random_mask(17, 23, 0.3, 5);
  save_mask_png(dir / "m.png", m);
  EXPECT_EQ(load_mask_png(dir / "m.png"), m);

  Raster img = random_raster(6, 4, 3, 9);
  save_png(dir / "i.png", img);
  const Raster back = load_png(dir / "i.png");
  ASSERT_TRUE(back.same_shape(img));
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(back.values()[i], img.values()[i], 0.5 / 255.0 + 1e-12);
  EXPECT_THROW(load_png(dir / "missing.png"), IoError);
}

TEST(WriteFileAtomic, ReplacesContent) {
  TempDir dir;
  write_file_atomic(dir / "f.txt", "one");
  write_file_atomic(dir / "f.txt", "two");
  std::ifstream in(dir / "f.txt");
  std::string s;
  in >> s;
  EXPECT_EQ(s, "two");
  EXPECT_EQ(std::distance(std::filesystem::directory_iterator(dir.path()), {}), 1);
}

// ---- tiling ----

TEST(Tiling, PlacementsCoverAndClamp) {
  const auto plan = make_tiling_plan(300, 256, 128, 0.5);
  // rows: 0, 64, 128, 172 (clamped); cols: 0, 64, 128
  std::set<int> rows, cols;
  for (const auto& b : plan.placements) {
    rows.insert(b.row_min);
    cols.insert(b.col_min);
    EXPECT_EQ(b.height(), 128);
    EXPECT_LE(b.row_max, 299);
    EXPECT_LE(b.col_max, 255);
  }
  EXPECT_EQ(rows, (std::set<int>{0, 64, 128, 172}));
  EXPECT_EQ(cols, (std::set<int>{0, 64, 128}));
  EXPECT_THROW(make_tiling_plan(100, 100, 128, 0.5), InvalidArgumentError);
  EXPECT_THROW(make_tiling_plan(256, 256, 128, 1.0), InvalidArgumentError);
}

TEST(Tiling, BlendWeightsArePartitionOfUnity) {
  const auto plan = make_tiling_plan(96, 80, 32, 0.5);
  BlendWeights w(plan);
  std::vector<double> sum(96 * 80, 0.0);
  for (std::size_t p = 0; p < plan.placements.size(); ++p) {
    const auto& b = plan.placements[p];
    for (int y = 0; y < 32; ++y) {
      for (int x = 0; x < 32; ++x) sum[(b.row_min + y) * 80 + b.col_min + x] += w.weight(p, y, x);
    }
  }
  for (double s : sum) EXPECT_NEAR(s, 1.0, 1e-12);
}

TEST(Tiling, IdentityStitchSmall) {
  const Raster img = random_raster(100, 70, 3, 2);
  const Raster out = tile_and_stitch(img, 32, 0.25, [](const Raster& t) { return t; });
  ASSERT_TRUE(out.same_shape(img));
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(out.values()[i], img.values()[i], 1e-12);
}

TEST(Tiling, PerTileOutputMayChangeChannels) {
  const Raster img = random_raster(64, 64, 3, 4);
  const Raster out = tile_and_stitch(img, 32, 0.5, [](const Raster& t) { return t.channel(1); });
  ASSERT_EQ(out.channels(), 1);
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) EXPECT_NEAR(out.at(y, x, 0), img.at(y, x, 1), 1e-12);
  }
}

TEST(Tiling, CropCopiesAllChannels) {
  const Raster img = random_raster(10, 10, 2, 8);
  const Raster c = crop(img, {2, 3, 4, 7});
  ASSERT_EQ(c.height(), 3);
  ASSERT_EQ(c.width(), 5);
  EXPECT_EQ(c.at(0, 0, 1), img.at(2, 3, 1));
  EXPECT_EQ(c.at(2, 4, 0), img.at(4, 7, 0));
}
