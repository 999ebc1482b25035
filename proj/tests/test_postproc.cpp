#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "helpers.hpp"
#include "oracles.hpp"
#include "univcd/postproc.hpp"

using namespace univcd;
using testing_util::random_mask;
using testing_util::random_raster;

namespace {


BinaryMask brute_filter(const BinaryMask& m, int r, bool take_max) {
  BinaryMask out(m.height(), m.width());
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) {
      bool v = !take_max;
      for (int yy = y - r; yy <= y + r; ++yy) {
        for (int xx = x - r; xx <= x + r; ++xx) {
          if (yy < 0 || xx < 0 || yy >= m.height() || xx >= m.width()) continue;
          v = take_max ? (v || m.at(yy, xx)) : (v && m.at(yy, xx));
        }
      }
      out.set(y, x, v);
    }
  }
  return out;
}

BinaryMask rect_mask(int h, int w, std::initializer_list<BBox> boxes) {
  BinaryMask m(h, w);
  for (const auto& b : boxes) {
    for (int y = b.row_min; y <= b.row_max; ++y) {
      for (int x = b.col_min; x <= b.col_max; ++x) m.set(y, x);
    }
  }
  return m;
}

Raster likelihood_of(const BinaryMask& m) {
  Raster r(m.height(), m.width(), 1);
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) r.at(y, x, 0) = m.at(y, x) ? 0.9 : 0.05;
  }
  return r;
}

class FailingRefiner final : public Refiner {
 public:
  BinaryMask segment(const Raster&, const BBox&, std::span<const PointPrompt>) override {
    throw RefinerError("segmenter unavailable");
  }
};

// Always answers with a fixed, unrelated mask.
class WrongRefiner final : public Refiner {
 public:
  explicit WrongRefiner(BinaryMask m) : m_(std::move(m)) {}
  BinaryMask segment(const Raster&, const BBox&, std::span<const PointPrompt>) override { return m_; }

 private:
  BinaryMask m_;
};

struct RefineSetup {
  BinaryMask stage1 = rect_mask(40, 40, {{2, 2, 9, 11}, {20, 25, 33, 36}});
  ComponentSet candidates = binarize_and_clean(likelihood_of(stage1), {0, 0.0, 1});
  Raster image = random_raster(40, 40, 3, 1);
  ClassScoreMap s1{Raster(40, 40, 2, 0.2), {"a", "b"}, ScoreMode::kSoftmax};
  ClassScoreMap s2{Raster(40, 40, 2, 0.7), {"a", "b"}, ScoreMode::kSoftmax};
};

}  // namespace

TEST(Otsu, MatchesExhaustiveSearch) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 200; ++t) {
    oracle::Hist h{};
    std::uniform_int_distribution<int> bins(2, 256);
    const int used = bins(rng);
    std::uniform_int_distribution<int> pick(0, 255), count(1, 1000);
    for (int i = 0; i < used; ++i) h[pick(rng)] += count(rng);
    if (std::count_if(h.begin(), h.end(), [](auto v) { return v > 0; }) < 2) {
      h[0] += 1;
      h[255] += 1;
    }
    EXPECT_EQ(otsu_cut(h), oracle::otsu(h)) << "trial " << t;
  }
}

TEST(Otsu, ThresholdConventionAndDegenerate) {
  Raster r(1, 4, 1);
  r.at(0, 0, 0) = 0.1;
  r.at(0, 1, 0) = 0.1;
  r.at(0, 2, 0) = 0.8;
  r.at(0, 3, 0) = 0.9;
  // Bins 25 and 204/230: the best cut is the last bin of the low class.
  EXPECT_DOUBLE_EQ(otsu_threshold(r), 26.0 / 256.0);
  EXPECT_THROW(otsu_threshold(Raster(3, 3, 1, 0.5)), DegenerateInputError);
  EXPECT_THROW(otsu_threshold(Raster(3, 3, 2, 0.5)), InvalidArgumentError);
}

TEST(Components, MatchFloodFill) {
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto m = random_mask(32, 32, 0.3 + 0.004 * s, s);
    const auto got = connected_components(m);
    const auto want = oracle::flood_fill(m);
    ASSERT_EQ(got.components.size(), want.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
      const auto& c = got.components[i];
      EXPECT_EQ(c.label, static_cast<int>(i) + 1);
      EXPECT_EQ((std::set<std::pair<int, int>>(c.pixels.begin(), c.pixels.end())), want[i]);
      EXPECT_EQ(c.area, want[i].size());
      int r0 = 1 << 30, c0 = 1 << 30, r1 = -1, c1 = -1;
      double sr = 0, sc = 0;
      for (const auto& [r, col] : want[i]) {
        r0 = std::min(r0, r);
        c0 = std::min(c0, col);
        r1 = std::max(r1, r);
        c1 = std::max(c1, col);
        sr += r;
        sc += col;
      }
      EXPECT_EQ(c.bbox, (BBox{r0, c0, r1, c1}));
      EXPECT_NEAR(c.centroid_row, sr / c.area, 1e-12);
      EXPECT_NEAR(c.centroid_col, sc / c.area, 1e-12);
    }
  }
}

TEST(Morphology, MatchesBruteForceWindows) {
  for (std::uint64_t s = 0; s < 30; ++s) {
    const auto m = random_mask(20, 17, 0.6, s);
    for (int r : {0, 1, 2}) {
      EXPECT_EQ(erode(m, r), brute_filter(m, r, false));
      EXPECT_EQ(dilate(m, r), brute_filter(m, r, true));
      EXPECT_EQ(morphological_open(m, r), brute_filter(brute_filter(m, r, false), r, true));
    }
  }
  EXPECT_THROW(erode(BinaryMask(2, 2), -1), InvalidArgumentError);
}

TEST(Cleanup, RemovesSpecklesAndSmallComponents) {
  auto m = rect_mask(64, 64, {{5, 5, 20, 20}, {40, 40, 42, 42}});
  m.set(30, 50);
  CleanupConfig cfg;
  cfg.min_area_floor = 10;
  const auto cs = binarize_and_clean(likelihood_of(m), cfg);
  ASSERT_EQ(cs.components.size(), 1u);
  EXPECT_EQ(cs.components[0].area, 256u);
  EXPECT_EQ(cfg.min_area(1000, 1000), 500u);
  EXPECT_TRUE(binarize_and_clean(Raster(8, 8, 1, 0.3)).empty());
}

TEST(Refine, DilateBoxAndCentroidPrompt) {
  EXPECT_EQ(dilate_box({10, 10, 19, 29}, 0.1, 100, 100), (BBox{9, 9, 20, 30}));
  EXPECT_EQ(dilate_box({0, 0, 9, 9}, 1.0, 12, 12), (BBox{0, 0, 11, 11}));
  // A ring: the centroid lies in the hole, so the prompt is the nearest ring pixel.
  auto ring = rect_mask(9, 9, {{2, 2, 6, 6}});
  for (int y = 3; y <= 5; ++y) {
    for (int x = 3; x <= 5; ++x) ring.set(y, x, false);
  }
  const auto comps = connected_components(ring);
  const auto p = centroid_prompt(comps.components.at(0));
  EXPECT_TRUE(ring.at(p.row, p.col));
  EXPECT_DOUBLE_EQ(std::hypot(p.row - 4.0, p.col - 4.0), 2.0);
  const auto solid = connected_components(rect_mask(9, 9, {{1, 1, 7, 7}}));
  const auto q = centroid_prompt(solid.components.at(0));
  EXPECT_EQ(q.row, 4);
  EXPECT_EQ(q.col, 4);
}

TEST(Refine, EchoReproducesStageOne) {
  RefineSetup s;
  ASSERT_EQ(s.candidates.components.size(), 2u);
  MaskEchoRefiner echo(s.candidates.to_mask());
  const auto r = refine_components(s.candidates, s.image, s.image, s.s1, s.s2, 1, echo);
  EXPECT_EQ(r.mask, s.stage1);
  for (const auto& rec : r.records) {
    EXPECT_EQ(rec.outcome, RefineOutcome::kAccepted);
    EXPECT_EQ(rec.iou, 1.0);
    EXPECT_EQ(rec.epoch, 1);  // epoch-2 scores are higher
  }
}

TEST(Refine, RejectedCandidatesKeptOrDeleted) {
  RefineSetup s;
  WrongRefiner wrong(rect_mask(40, 40, {{38, 0, 39, 1}}));
  const auto kept = refine_components(s.candidates, s.image, s.image, s.s1, s.s2, 0, wrong);
  EXPECT_EQ(kept.mask, s.stage1);
  for (const auto& rec : kept.records) EXPECT_EQ(rec.outcome, RefineOutcome::kKept);
  RefineConfig strict;
  strict.strict = true;
  const auto deleted = refine_components(s.candidates, s.image, s.image, s.s1, s.s2, 0, wrong, strict);
  EXPECT_EQ(deleted.mask.count(), 0u);
  for (const auto& rec : deleted.records) EXPECT_EQ(rec.outcome, RefineOutcome::kDeleted);
}

TEST(Refine, FailingRefinerKeepsCandidateWithWarning) {
  RefineSetup s;
  FailingRefiner failing;
  RefineConfig strict;
  strict.strict = true;
  const auto r = refine_components(s.candidates, s.image, s.image, s.s1, s.s2, 0, failing, strict);
  EXPECT_EQ(r.mask, s.stage1);
  for (const auto& rec : r.records) {
    EXPECT_EQ(rec.outcome, RefineOutcome::kKept);
    EXPECT_NE(rec.warning.find("segmenter unavailable"), std::string::npos);
  }
  EXPECT_THROW(refine_components(s.candidates, s.image, s.image, s.s1, s.s2, 5, failing), InvalidArgumentError);
}

TEST(Refine, ConceptStageReplacesMatchedCandidates) {
  const auto mask = rect_mask(30, 30, {{2, 2, 11, 11}, {20, 20, 25, 25}});
  const auto concept_mask = rect_mask(30, 30, {{1, 1, 12, 12}});
  MaskEchoRefiner with(mask, {concept_mask}, true);
  const Raster img = random_raster(30, 30, 3, 2);
  const auto out = concept_refine(mask, img, "building", with);
  EXPECT_EQ(out, rect_mask(30, 30, {{1, 1, 12, 12}, {20, 20, 25, 25}}));
  MaskEchoRefiner without(mask);
  EXPECT_THROW(concept_refine(mask, img, "building", without), UnsupportedError);
}

TEST(RefineConfig, Validation) {
  RefineConfig c;
  EXPECT_NO_THROW(c.validate());
  c.iou_min = 1.5;
  EXPECT_THROW(c.validate(), InvalidArgumentError);
  c = {};
  c.box_dilation = -0.1;
  EXPECT_THROW(c.validate(), InvalidArgumentError);
}
