#include <gtest/gtest.h>

#include <iostream>
#include <random>

#include "support.hpp"

using namespace spxr;

namespace {

GtObject object(int id, BinaryMask m) { return GtObject{id, std::move(m), ""}; }

}  // namespace

TEST(GreedyGtSet, AlignedObjectIsExact) {
  const LabelMap lm = testkit::block_label_map(12, 12, 4, 4);
  const auto gt = object(1, testkit::rect_mask(12, 12, Rect{4, 0, 8, 8}));
  const auto sel = greedy_gt_set(lm, gt);
  EXPECT_EQ(sel.superpixels, (std::vector<std::uint32_t>{1, 2, 4, 5}));
  EXPECT_DOUBLE_EQ(sel.iou, 1.0);
}

TEST(GreedyGtSet, ObjectInsideLargerSuperpixel) {
  const LabelMap lm = testkit::block_label_map(8, 4, 4, 4);
  const auto gt = object(1, testkit::rect_mask(8, 4, Rect{0, 0, 2, 4}));  // half of superpixel 0
  const auto sel = greedy_gt_set(lm, gt);
  EXPECT_EQ(sel.superpixels, (std::vector<std::uint32_t>{0}));
  EXPECT_DOUBLE_EQ(sel.iou, 0.5);
}

TEST(GreedyGtSet, EmptyObjectSelectsNothing) {
  const auto sel = greedy_gt_set(testkit::block_label_map(4, 4, 2, 2), object(1, BinaryMask(4, 4)));
  EXPECT_TRUE(sel.superpixels.empty());
  EXPECT_EQ(sel.iou, 0.0);
}

TEST(GreedyGtSet, TraceIsNonDecreasingAndEndsAtResult) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 50; ++t) {
    const LabelMap lm = testkit::random_label_map(rng, 20, 16, 25);
    const auto sel = greedy_gt_set(lm, object(1, testkit::random_region(rng, 20, 16)));
    ASSERT_FALSE(sel.trace.empty());
    for (std::size_t i = 1; i < sel.trace.size(); ++i) EXPECT_GT(sel.trace[i], sel.trace[i - 1]);
    EXPECT_DOUBLE_EQ(sel.trace.back(), sel.iou);
    EXPECT_TRUE(std::is_sorted(sel.superpixels.begin(), sel.superpixels.end()));
  }
}

TEST(GreedyGtSet, ReportedIouMatchesRasterizedSelection) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 50; ++t) {
    const LabelMap lm = testkit::random_label_map(rng, 20, 16, 25);
    const auto gt = object(1, testkit::random_region(rng, 20, 16));
    const auto sel = greedy_gt_set(lm, gt);
    EXPECT_NEAR(mask_iou(rasterize_superpixels(lm, sel.superpixels), gt.mask), sel.iou, 1e-12);
  }
}

TEST(GreedyGtSet, NeverBeatsExhaustive) {
  std::mt19937_64 rng(5);
  int equal = 0, total = 0;
  for (int t = 0; t < 200; ++t) {
    const LabelMap lm = testkit::random_label_map(rng, 12, 10, 12);
    const auto gt = object(1, testkit::random_region(rng, 12, 10));
    const auto g = greedy_gt_set(lm, gt);
    const auto e = exhaustive_gt_set(lm, gt);
    EXPECT_LE(g.iou, e.iou + 1e-12);
    EXPECT_NEAR(mask_iou(rasterize_superpixels(lm, e.superpixels), gt.mask), e.iou, 1e-12);
    equal += g.iou == e.iou;
    ++total;
  }
  std::cout << "greedy matched exhaustive on " << equal << "/" << total << " instances\n";
  EXPECT_GT(equal, total / 2);
}

TEST(GreedyGtSet, ConstructedSuboptimalInstance) {
  const auto [lm, gt] = testkit::greedy_suboptimal_instance();
  const auto g = greedy_gt_set(lm, gt);
  const auto e = exhaustive_gt_set(lm, gt);
  EXPECT_EQ(g.superpixels, (std::vector<std::uint32_t>{0, 1, 2}));
  EXPECT_DOUBLE_EQ(g.iou, 5.0 / 18.0);
  EXPECT_EQ(e.superpixels, (std::vector<std::uint32_t>{0, 1}));
  EXPECT_DOUBLE_EQ(e.iou, 2.0 / 7.0);
  EXPECT_EQ(g.trace, (std::vector<double>{3.0 / 16.0, 4.0 / 17.0, 5.0 / 18.0}));
}

TEST(ExhaustiveGtSet, RejectsLargeInstances) {
  const LabelMap lm = testkit::block_label_map(16, 16, 4, 4);  // 16 superpixels
  const auto gt = object(1, testkit::rect_mask(16, 16, Rect{0, 0, 16, 16}));
  try {
    exhaustive_gt_set(lm, gt);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::instance_too_large);
  }
  EXPECT_DOUBLE_EQ(exhaustive_gt_set(lm, gt, 16).iou, 1.0);
}

TEST(Affinity, NoObjectsMeansAllSame) {
  const auto pairs = affinity_labels({}, 5, 4, 8);
  EXPECT_EQ(pairs.size(), 4u * 4 + 3u * 5 + 2u * 4 * 3);
  for (const auto& p : pairs) EXPECT_TRUE(p.same);
}

TEST(Affinity, LeftHalfObject) {
  const GtObject objs[] = {object(1, testkit::rect_mask(6, 3, Rect{0, 0, 3, 3}))};
  int different = 0;
  for (const auto& p : affinity_labels(objs, 6, 3, 4)) {
    const bool crosses = (p.i % 6 < 3) != (p.j % 6 < 3);
    EXPECT_EQ(p.same, !crosses);
    EXPECT_LT(p.i, p.j);
    different += !p.same;
  }
  EXPECT_EQ(different, 3);
}

TEST(Affinity, OverlapLaterIdWinsAndMatchesNaiveLoop) {
  const int w = 9, h = 7;
  const GtObject objs[] = {object(7, testkit::rect_mask(w, h, Rect{3, 2, 5, 4})),
                           object(2, testkit::rect_mask(w, h, Rect{1, 1, 5, 4}))};
  const auto combined = combine_objects(objs, w, h);
  EXPECT_EQ(combined[3 * w + 4], 2u);  // id 7 painted last
  EXPECT_EQ(combined[1 * w + 1], 1u);
  EXPECT_EQ(combined[0], 0u);

  auto region = [&](int x, int y) {
    int r = 0;
    if (x >= 1 && x < 6 && y >= 1 && y < 5) r = 2;
    if (x >= 3 && x < 8 && y >= 2 && y < 6) r = 7;
    return r;
  };
  for (int conn : {4, 8}) {
    const auto pairs = affinity_labels(objs, w, h, conn);
    std::size_t n = 0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (auto [dx, dy] : {std::pair{1, 0}, {0, 1}, {1, 1}, {-1, 1}}) {
          if (conn == 4 && dx != 0 && dy != 0) continue;
          const int nx = x + dx, ny = y + dy;
          if (nx < 0 || nx >= w || ny >= h) continue;
          const auto it = std::find_if(pairs.begin(), pairs.end(), [&](const PixelPair& p) {
            return p.i == static_cast<std::uint32_t>(y * w + x) && p.j == static_cast<std::uint32_t>(ny * w + nx);
          });
          ASSERT_NE(it, pairs.end());
          EXPECT_EQ(it->same, region(x, y) == region(nx, ny));
          ++n;
        }
    EXPECT_EQ(pairs.size(), n);
  }
}

TEST(Affinity, FeatureMapEncoding) {
  const GtObject objs[] = {object(1, testkit::rect_mask(4, 3, Rect{0, 0, 2, 3}))};
  const FeatureMap fm = affinity_feature_map(objs, 4, 3, 8);
  ASSERT_EQ(fm.dim, 4);
  EXPECT_EQ(fm.at(0)[0], 1.0f);   // (0,0)-(1,0)
  EXPECT_EQ(fm.at(1)[0], 0.0f);   // (1,0)-(2,0) crosses
  EXPECT_EQ(fm.at(3)[0], -1.0f);  // right edge
  EXPECT_EQ(fm.at(8)[1], -1.0f);  // bottom row
  EXPECT_EQ(fm.at(1)[2], 0.0f);   // (1,0)-(2,1)
  EXPECT_EQ(fm.at(2)[3], 0.0f);   // (2,0)-(1,1)
  EXPECT_EQ(fm.at(0)[3], -1.0f);  // left edge
  EXPECT_EQ(affinity_feature_map(objs, 4, 3, 4).dim, 2);
  EXPECT_THROW(affinity_labels(objs, 4, 3, 6), Error);
  EXPECT_THROW(affinity_labels(objs, 5, 3, 4), Error);
}
