#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "spxr/error.hpp"
#include "spxr/raster.hpp"

namespace spxr {

struct SuperpixelInfo {
  std::uint32_t area = 0;
  std::array<double, 3> mean_color{};
  Rect bbox;
  double cx = 0.0;  // centroid, pixel units
  double cy = 0.0;
};

struct SuperpixelStats {
  int width = 0;
  int height = 0;
  std::vector<SuperpixelInfo> superpixels;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> adjacency;  // (a, b) with a < b, sorted
  std::vector<std::vector<std::uint32_t>> neighbors;               // sorted per superpixel

  std::size_t count() const { return superpixels.size(); }
};

/// Per-superpixel area, mean color, bounding box and centroid, plus the
/// 4-connected adjacency graph.
inline SuperpixelStats compute_stats(const LabelMap& lm, const RgbImage& img) {
  require(lm.width == img.width && lm.height == img.height, Errc::dimension_mismatch,
          "compute_stats: label map and image dimensions differ");
  const std::size_t n = lm.count;
  SuperpixelStats st;
  st.width = lm.width;
  st.height = lm.height;
  st.superpixels.resize(n);
  std::vector<std::array<double, 5>> acc(n, std::array<double, 5>{});  // r g b x y
  std::vector<std::array<int, 4>> box(n, std::array<int, 4>{lm.width, lm.height, -1, -1});

  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
  for (int y = 0; y < lm.height; ++y) {
    for (int x = 0; x < lm.width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * lm.width + x;
      const auto l = lm.labels[i];
      auto& sp = st.superpixels[l];
      ++sp.area;
      const float* p = img.pixel(i);
      auto& a = acc[l];
      a[0] += p[0];
      a[1] += p[1];
      a[2] += p[2];
      a[3] += x;
      a[4] += y;
      auto& b = box[l];
      b[0] = std::min(b[0], x);
      b[1] = std::min(b[1], y);
      b[2] = std::max(b[2], x);
      b[3] = std::max(b[3], y);
      if (x + 1 < lm.width && lm.labels[i + 1] != l) pairs.emplace_back(std::minmax(l, lm.labels[i + 1]));
      if (y + 1 < lm.height && lm.labels[i + lm.width] != l) pairs.emplace_back(std::minmax(l, lm.labels[i + lm.width]));
    }
  }
  for (std::size_t s = 0; s < n; ++s) {
    auto& sp = st.superpixels[s];
    if (sp.area == 0) continue;
    const double inv = 1.0 / sp.area;
    sp.mean_color = {acc[s][0] * inv, acc[s][1] * inv, acc[s][2] * inv};
    sp.cx = acc[s][3] * inv;
    sp.cy = acc[s][4] * inv;
    sp.bbox = Rect{box[s][0], box[s][1], box[s][2] - box[s][0] + 1, box[s][3] - box[s][1] + 1};
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  st.adjacency = std::move(pairs);
  st.neighbors.resize(n);
  for (auto [a, b] : st.adjacency) {
    st.neighbors[a].push_back(b);
    st.neighbors[b].push_back(a);
  }
  for (auto& nb : st.neighbors) std::sort(nb.begin(), nb.end());
  return st;
}

struct PooledVector {
  std::uint32_t id = 0;
  std::vector<double> values;
  std::uint32_t support = 0;  // pixels pooled
};

/// Mean of `field` per superpixel over window ∩ image. `field` covers the
/// whole window (window.w x window.h); pixels outside the image are ignored.
/// Only superpixels that intersect the window are returned, sorted by id.
inline std::vector<PooledVector> pool_scalar(const LabelMap& lm, const RealMap& field, const Rect& window) {
  require(field.width == window.w && field.height == window.h, Errc::dimension_mismatch,
          "pool_scalar: field does not cover the window");
  const Rect clip = intersect(window, Rect{0, 0, lm.width, lm.height});
  require(!clip.empty(), Errc::invalid_argument, "pool_scalar: window does not intersect the image");

  std::vector<double> sum(lm.count, 0.0);
  std::vector<std::uint32_t> support(lm.count, 0);
  for (int y = clip.y; y < clip.y_end(); ++y) {
    for (int x = clip.x; x < clip.x_end(); ++x) {
      const auto l = lm(x, y);
      sum[l] += field(x - window.x, y - window.y);
      ++support[l];
    }
  }
  std::vector<PooledVector> out;
  for (std::uint32_t l = 0; l < lm.count; ++l)
    if (support[l] > 0) out.push_back(PooledVector{l, {sum[l] / support[l]}, support[l]});
  return out;
}

/// Channel-wise mean of the feature map over each full superpixel; entry i
/// belongs to superpixel i.
inline std::vector<PooledVector> pool_features(const LabelMap& lm, const FeatureMap& fm) {
  require(lm.width == fm.width && lm.height == fm.height, Errc::dimension_mismatch,
          "pool_features: label map and feature map dimensions differ");
  const auto dim = static_cast<std::size_t>(fm.dim);
  std::vector<PooledVector> out(lm.count);
  for (std::uint32_t l = 0; l < lm.count; ++l) {
    out[l].id = l;
    out[l].values.assign(dim, 0.0);
  }
  for (std::size_t i = 0; i < lm.pixel_count(); ++i) {
    auto& pv = out[lm.labels[i]];
    const auto f = fm.at(i);
    for (std::size_t c = 0; c < dim; ++c) pv.values[c] += f[c];
    ++pv.support;
  }
  for (auto& pv : out)
    if (pv.support > 0)
      for (auto& v : pv.values) v /= pv.support;
  return out;
}

}  // namespace spxr
