#include <gtest/gtest.h>

#include <random>

#include "support.hpp"

using namespace spxr;

TEST(ComputeStats, TwoByTwo) {
  const std::vector<std::uint32_t> raw{0, 0, 1, 1};
  const LabelMap lm = LabelMap::from_raw(2, 2, raw);
  const SuperpixelStats st = compute_stats(lm, RgbImage(2, 2, 0.5f));
  ASSERT_EQ(st.count(), 2u);
  EXPECT_EQ(st.superpixels[0].area, 2u);
  EXPECT_EQ(st.superpixels[1].area, 2u);
  for (const auto& sp : st.superpixels)
    for (double c : sp.mean_color) EXPECT_DOUBLE_EQ(c, 0.5);
  ASSERT_EQ(st.adjacency.size(), 1u);
  EXPECT_EQ(st.adjacency[0], (std::pair<std::uint32_t, std::uint32_t>{0, 1}));
  EXPECT_EQ(st.superpixels[0].bbox, (Rect{0, 0, 2, 1}));
  EXPECT_DOUBLE_EQ(st.superpixels[1].cx, 0.5);
  EXPECT_DOUBLE_EQ(st.superpixels[1].cy, 1.0);
}

TEST(ComputeStats, SingleLabelHasNoAdjacency) {
  LabelMap lm = LabelMap::from_raw(5, 4, std::vector<std::uint32_t>(20, 3));
  const auto st = compute_stats(lm, RgbImage(5, 4));
  EXPECT_TRUE(st.adjacency.empty());
  EXPECT_EQ(st.superpixels[0].area, 20u);
}

TEST(ComputeStats, AreasPartitionAndAdjacencyIsSymmetric) {
  std::mt19937_64 rng(2);
  const LabelMap lm = testkit::random_label_map(rng, 16, 16, 12);
  const auto st = compute_stats(lm, testkit::random_image(rng, 16, 16));
  std::uint64_t total = 0;
  for (const auto& sp : st.superpixels) total += sp.area;
  EXPECT_EQ(total, 256u);
  for (auto [a, b] : st.adjacency) EXPECT_LT(a, b);
  for (std::uint32_t s = 0; s < st.count(); ++s)
    for (auto n : st.neighbors[s]) {
      EXPECT_NE(n, s);
      const auto& back = st.neighbors[n];
      EXPECT_TRUE(std::find(back.begin(), back.end(), s) != back.end());
    }
}

TEST(ComputeStats, DimensionMismatch) {
  const LabelMap lm = testkit::block_label_map(4, 4, 2, 2);
  EXPECT_THROW(compute_stats(lm, RgbImage(4, 5)), Error);
}

TEST(PoolScalar, ConstantField) {
  const LabelMap lm = testkit::block_label_map(10, 10, 3, 4);
  const Rect win{2, 1, 5, 6};
  for (const auto& pv : pool_scalar(lm, RealMap(5, 6, 0.7), win)) EXPECT_DOUBLE_EQ(pv.values[0], 0.7);
}

TEST(PoolScalar, MeanOverIntersectionAndAbsentOutside) {
  // superpixels: columns 0-1 = 0, columns 2-3 = 1; window covers column 1 only
  const LabelMap lm = testkit::block_label_map(4, 2, 2, 2);
  const Rect win{1, 0, 1, 2};
  RealMap field(1, 2);
  field(0, 0) = 0.2;
  field(0, 1) = 0.6;
  const auto out = pool_scalar(lm, field, win);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].id, 0u);
  EXPECT_DOUBLE_EQ(out[0].values[0], 0.4);
  EXPECT_EQ(out[0].support, 2u);
}

TEST(PoolScalar, WindowPartlyOutsideImage) {
  const LabelMap lm = testkit::block_label_map(6, 6, 3, 3);
  const Rect win{-2, -2, 4, 4};
  RealMap field(4, 4, 1.0);
  const auto out = pool_scalar(lm, field, win);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].support, 4u);
  EXPECT_THROW(pool_scalar(lm, RealMap(2, 2), Rect{10, 10, 2, 2}), Error);
  EXPECT_THROW(pool_scalar(lm, RealMap(3, 2), Rect{0, 0, 2, 2}), Error);
}

TEST(PoolScalar, LinearityBoundsAndAreaWeightedMean) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int t = 0; t < 20; ++t) {
    const LabelMap lm = testkit::random_label_map(rng, 20, 15, 9);
    const Rect win{static_cast<int>(rng() % 8), static_cast<int>(rng() % 6), 9, 7};
    RealMap f(win.w, win.h), g(win.w, win.h), mix(win.w, win.h);
    const double a = u(rng), b = u(rng);
    for (std::size_t i = 0; i < f.data.size(); ++i) {
      f.data[i] = 0.25 + 0.5 * (u(rng) + 1.0) / 2.0;
      g.data[i] = u(rng);
      mix.data[i] = a * f.data[i] + b * g.data[i];
    }
    const auto pf = pool_scalar(lm, f, win), pg = pool_scalar(lm, g, win), pm = pool_scalar(lm, mix, win);
    ASSERT_EQ(pf.size(), pm.size());
    double weighted = 0.0, support = 0.0;
    for (std::size_t i = 0; i < pf.size(); ++i) {
      EXPECT_NEAR(pm[i].values[0], a * pf[i].values[0] + b * pg[i].values[0], 1e-6);
      EXPECT_GE(pf[i].values[0], 0.25);
      EXPECT_LE(pf[i].values[0], 0.75);
      weighted += pf[i].values[0] * pf[i].support;
      support += pf[i].support;
    }
    double direct = 0.0;
    for (double v : f.data) direct += v;
    EXPECT_NEAR(weighted / support, direct / static_cast<double>(f.data.size()), 1e-6);
  }
}

TEST(PoolFeatures, ConstantAndSinglePixel) {
  FeatureMap fm(4, 4, 3, 0.0f);
  for (std::size_t i = 0; i < fm.pixel_count(); ++i) {
    fm.at(i)[0] = 2.0f;
    fm.at(i)[1] = -1.0f;
    fm.at(i)[2] = 0.5f;
  }
  for (const auto& pv : pool_features(testkit::block_label_map(4, 4, 2, 3), fm))
    EXPECT_EQ(pv.values, (std::vector<double>{2.0, -1.0, 0.5}));

  std::vector<std::uint32_t> raw(16, 0);
  raw[5] = 1;
  const LabelMap lm = LabelMap::from_raw(4, 4, raw);
  std::mt19937_64 rng(1);
  const FeatureMap r = testkit::random_features(rng, 4, 4, 3);
  const auto pooled = pool_features(lm, r);
  for (int c = 0; c < 3; ++c) EXPECT_DOUBLE_EQ(pooled[1].values[c], r.at(5)[c]);
  EXPECT_EQ(pooled[1].support, 1u);
}

TEST(PoolFeatures, MatchesNaiveLoop) {
  std::mt19937_64 rng(9);
  const LabelMap lm = testkit::random_label_map(rng, 8, 8, 10);
  const FeatureMap fm = testkit::random_features(rng, 8, 8, 4);
  const auto pooled = pool_features(lm, fm);
  const auto naive = testkit::naive_feature_means(lm, fm);
  ASSERT_EQ(pooled.size(), naive.size());
  for (std::size_t s = 0; s < naive.size(); ++s)
    for (int c = 0; c < 4; ++c) EXPECT_NEAR(pooled[s].values[c], naive[s][c], 1e-9);
}

TEST(PoolFeatures, DimensionMismatch) {
  EXPECT_THROW(pool_features(testkit::block_label_map(4, 4, 2, 2), FeatureMap(4, 3, 2)), Error);
}
