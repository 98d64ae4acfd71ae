#include <gtest/gtest.h>

#include <random>

#include "support.hpp"

using namespace spxr;

namespace {

BinaryMask square(int w, int h, int x0, int y0, int side) { return testkit::rect_mask(w, h, Rect{x0, y0, side, side}); }

BinaryMask random_blobs(std::mt19937_64& rng, int w, int h) {
  BinaryMask m(w, h);
  for (int k = 0; k < 4; ++k) {
    const int cx = static_cast<int>(rng() % w), cy = static_cast<int>(rng() % h), r = 2 + static_cast<int>(rng() % 6);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) m.set(x, y);
  }
  for (auto& b : m.bits)
    if (rng() % 12 == 0) b = !b;  // speckle
  return m;
}

}  // namespace

TEST(BilateralFilter, ConstantProbabilitiesAreFixed) {
  std::mt19937_64 rng(1);
  const LabelMap lm = testkit::random_label_map(rng, 12, 12, 9);
  const auto st = compute_stats(lm, testkit::random_image(rng, 12, 12));
  const std::vector<double> probs(lm.count, 0.37);
  for (double v : spx_bilateral_filter(probs, st, PostprocessConfig{})) EXPECT_NEAR(v, 0.37, 1e-12);
}

TEST(BilateralFilter, IsolatedSuperpixelUnchanged) {
  const LabelMap lm = LabelMap::from_raw(6, 6, std::vector<std::uint32_t>(36, 0));
  const auto st = compute_stats(lm, RgbImage(6, 6));
  const std::vector<double> probs{0.8};
  EXPECT_EQ(spx_bilateral_filter(probs, st, PostprocessConfig{})[0], 0.8);
}

TEST(BilateralFilter, TwoSameColorNeighbors) {
  const LabelMap lm = testkit::block_label_map(8, 4, 4, 4);
  const auto st = compute_stats(lm, RgbImage(8, 4, 0.3f));
  const std::vector<double> probs{1.0, 0.0};
  PostprocessConfig equal;
  equal.spatial_sigma = 1e9;  // equal weights
  const auto out = spx_bilateral_filter(probs, st, equal);
  EXPECT_NEAR(out[0], 0.5, 1e-12);
  EXPECT_NEAR(out[1], 0.5, 1e-12);

  // centroids 4 px apart: w = exp(-16 / (2 * 4^2)) = exp(-0.5)
  PostprocessConfig near;
  near.spatial_sigma = 4.0;
  const double w = std::exp(-0.5);
  const auto o2 = spx_bilateral_filter(probs, st, near);
  EXPECT_NEAR(o2[0], 1.0 / (1.0 + w), 1e-12);
  EXPECT_NEAR(o2[1], w / (1.0 + w), 1e-12);
}

TEST(BilateralFilter, ColorEdgeLimitsSmoothing) {
  const LabelMap lm = testkit::block_label_map(8, 4, 4, 4);
  RgbImage img(8, 4, 0.0f);
  for (int y = 0; y < 4; ++y)
    for (int x = 4; x < 8; ++x)
      for (int c = 0; c < 3; ++c) img.pixel(x, y)[c] = 1.0f;
  const auto st = compute_stats(lm, img);
  const std::vector<double> probs{1.0, 0.0};
  const auto out = spx_bilateral_filter(probs, st, PostprocessConfig{});
  EXPECT_GT(out[0], 0.999);
  EXPECT_LT(out[1], 0.001);
}

TEST(BilateralFilter, OutputsStayInUnitRange) {
  std::mt19937_64 rng(2);
  const LabelMap lm = testkit::random_label_map(rng, 16, 16, 20);
  const auto st = compute_stats(lm, testkit::random_image(rng, 16, 16));
  std::vector<double> probs(lm.count);
  for (auto& p : probs) p = static_cast<double>(rng() % 2);
  for (double v : spx_bilateral_filter(probs, st, PostprocessConfig{})) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(OpenClose, RadiusZeroIsIdentity) {
  std::mt19937_64 rng(3);
  const BinaryMask m = random_blobs(rng, 30, 20);
  EXPECT_EQ(open_close(m, 0), m);
}

TEST(OpenClose, SquareLosesOnlyTheDiskCorners) {
  const BinaryMask sq = square(40, 40, 10, 10, 20);
  const BinaryMask out = open_close(sq, 2);
  EXPECT_EQ(out, testkit::reference_open_close(sq, 2));
  // Three pixels per corner are out of reach of a radius-2 digital disk.
  EXPECT_EQ(sq.area() - out.area(), 12u);
  EXPECT_EQ(intersection_count(out, sq), out.area());
  EXPECT_FALSE(out(10, 10));
  EXPECT_FALSE(out(11, 10));
  EXPECT_FALSE(out(10, 11));
  EXPECT_TRUE(out(11, 11));
}

TEST(OpenClose, LargeDigitalDiskIsUnchanged) {
  // Not every digital disk survives (radius 8 loses its four tips); radius 10 does.
  BinaryMask disk(40, 40);
  for (int y = 0; y < 40; ++y)
    for (int x = 0; x < 40; ++x) disk.set(x, y, (x - 20) * (x - 20) + (y - 20) * (y - 20) <= 100);
  EXPECT_EQ(open_close(disk, 2), disk);
}

TEST(OpenClose, ThinProtrusionRemoved) {
  const BinaryMask sq = square(40, 40, 10, 10, 20);
  BinaryMask spur = sq;
  for (int x = 30; x < 35; ++x) spur.set(x, 20);  // 1 px wide, 5 px long
  const BinaryMask out = open_close(spur, 2);
  EXPECT_EQ(out, testkit::reference_open_close(spur, 2));
  // the root pixel is the tip of a disk centred on the edge; the rest goes
  EXPECT_TRUE(out(30, 20));
  for (int x = 31; x < 35; ++x) EXPECT_FALSE(out(x, 20));
  EXPECT_EQ(out.area(), open_close(sq, 2).area() + 1);
}

TEST(OpenClose, MatchesReferenceAndIsIdempotent) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 15; ++t) {
    const BinaryMask m = random_blobs(rng, 32, 24);
    const int r = 1 + t % 3;
    EXPECT_EQ(open_close(m, r), testkit::reference_open_close(m, r)) << t;
    const BinaryMask o = morph_open(m, r), c = morph_close(m, r);
    EXPECT_EQ(morph_open(o, r), o);
    EXPECT_EQ(morph_close(c, r), c);
  }
  EXPECT_THROW(open_close(BinaryMask(3, 3), -1), Error);
}

TEST(Nms, IdenticalMasksKeepHigherScore) {
  const BinaryMask a = square(20, 20, 2, 2, 6);
  const BinaryMask masks[] = {a, a};
  const double scores[] = {0.4, 0.9};
  EXPECT_EQ(nms(masks, scores, 0.95), (std::vector<std::size_t>{1}));
}

TEST(Nms, DisjointMasksBothKept) {
  const BinaryMask masks[] = {square(20, 20, 0, 0, 5), square(20, 20, 10, 10, 5)};
  const double scores[] = {0.2, 0.3};
  EXPECT_EQ(nms(masks, scores, 0.95), (std::vector<std::size_t>{1, 0}));
}

TEST(Nms, IouExactlyAtThresholdSuppresses) {
  const BinaryMask big = testkit::rect_mask(20, 20, Rect{0, 0, 5, 4});  // 20 px
  BinaryMask sub = big;
  sub.set(4, 3, false);  // 19 px, IoU 19/20
  ASSERT_EQ(mask_iou(big, sub), 0.95);
  const BinaryMask masks[] = {big, sub};
  const double scores[] = {0.9, 0.8};
  EXPECT_EQ(nms(masks, scores, 0.95), (std::vector<std::size_t>{0}));
  EXPECT_EQ(nms(masks, scores, 0.951).size(), 2u);
}

TEST(Nms, TiesKeepInputOrder) {
  const BinaryMask a = square(10, 10, 0, 0, 4);
  const BinaryMask masks[] = {a, a, square(10, 10, 6, 6, 3)};
  const double scores[] = {0.5, 0.5, 0.5};
  EXPECT_EQ(nms(masks, scores, 0.95), (std::vector<std::size_t>{0, 2}));
}

TEST(Nms, SurvivorsArePairwiseBelowThresholdAndTopSurvives) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 10; ++t) {
    std::vector<BinaryMask> masks;
    std::vector<double> scores;
    const BinaryMask base = random_blobs(rng, 24, 24);
    for (int i = 0; i < 30; ++i) {
      BinaryMask m = base;
      for (int f = 0; f < static_cast<int>(rng() % 12); ++f) {
        const std::size_t px = rng() % m.bits.size();
        m.bits[px] = !m.bits[px];
      }
      masks.push_back(m);
      scores.push_back(static_cast<double>(rng() % 1000) / 1000.0);
    }
    const auto kept = nms(masks, scores, 0.95);
    const auto top = static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
    ASSERT_FALSE(kept.empty());
    EXPECT_EQ(kept.front(), top);
    for (std::size_t i = 0; i < kept.size(); ++i) {
      if (i > 0) {
        EXPECT_GE(scores[kept[i - 1]], scores[kept[i]]);
      }
      for (std::size_t j = i + 1; j < kept.size(); ++j) EXPECT_LT(mask_iou(masks[kept[i]], masks[kept[j]]), 0.95);
    }
  }
}
