#pragma once

// Proposal post-processing: bilateral filtering of superpixel probabilities
// over the adjacency graph, morphological opening/closing, and mask NMS.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "spxr/error.hpp"
#include "spxr/pool.hpp"
#include "spxr/raster.hpp"

namespace spxr {

struct PostprocessConfig {
  double spatial_sigma = 30.0;  // pixels, between superpixel centroids
  double color_sigma = 0.1;     // mean-color distance
  double filter_threshold = 0.5;
  int radius = 2;               // disk structuring element
  double nms_iou = 0.95;

  void validate() const {
    require(spatial_sigma > 0.0 && color_sigma > 0.0, Errc::invalid_argument, "postprocess: sigmas must be positive");
    require(filter_threshold > 0.0 && filter_threshold < 1.0, Errc::invalid_argument,
            "postprocess: filter_threshold must lie in (0,1)");
    require(radius >= 0, Errc::invalid_argument, "postprocess: radius must be non-negative");
    require(nms_iou > 0.0 && nms_iou <= 1.0, Errc::invalid_argument, "postprocess: nms_iou must lie in (0,1]");
  }
};

/// Weighted mean of each superpixel's probability and those of its adjacent
/// superpixels; weights are gaussian in centroid distance and mean-color
/// distance.
inline std::vector<double> spx_bilateral_filter(std::span<const double> probs, const SuperpixelStats& stats,
                                                const PostprocessConfig& cfg) {
  require(probs.size() == stats.count(), Errc::dimension_mismatch, "bilateral filter: one probability per superpixel");
  const double ks = 1.0 / (2.0 * cfg.spatial_sigma * cfg.spatial_sigma);
  const double kc = 1.0 / (2.0 * cfg.color_sigma * cfg.color_sigma);
  std::vector<double> out(probs.size());
  for (std::size_t s = 0; s < probs.size(); ++s) {
    const auto& a = stats.superpixels[s];
    double num = probs[s], den = 1.0;  // self weight is exp(0) * exp(0)
    for (auto n : stats.neighbors[s]) {
      const auto& b = stats.superpixels[n];
      const double dx = a.cx - b.cx, dy = a.cy - b.cy;
      double dc = 0.0;
      for (int c = 0; c < 3; ++c) dc += (a.mean_color[c] - b.mean_color[c]) * (a.mean_color[c] - b.mean_color[c]);
      const double w = std::exp(-(dx * dx + dy * dy) * ks) * std::exp(-dc * kc);
      num += w * probs[n];
      den += w;
    }
    out[s] = std::clamp(num / den, 0.0, 1.0);
  }
  return out;
}

/// Ids with probability strictly above the threshold.
inline std::vector<std::uint32_t> select_superpixels(std::span<const double> probs, double threshold) {
  std::vector<std::uint32_t> ids;
  for (std::size_t s = 0; s < probs.size(); ++s)
    if (probs[s] > threshold) ids.push_back(static_cast<std::uint32_t>(s));
  return ids;
}

namespace detail {

inline std::vector<std::pair<int, int>> disk_offsets(int radius) {
  std::vector<std::pair<int, int>> off;
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx)
      if (dx * dx + dy * dy <= radius * radius) off.emplace_back(dx, dy);
  return off;
}

// Morphology on the infinite lattice with everything outside the image as
// background; computed in a buffer padded by the disk radius.
inline BinaryMask morph(const BinaryMask& m, int radius, bool dilate_first) {
  if (radius <= 0) return m;
  const int pad = 2 * radius;
  const int w = m.width + 2 * pad, h = m.height + 2 * pad;
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(w) * h, 0), tmp(buf.size(), 0);
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) buf[static_cast<std::size_t>(y + pad) * w + x + pad] = m(x, y) ? 1 : 0;
  const auto off = disk_offsets(radius);
  auto pass = [&](const std::vector<std::uint8_t>& src, std::vector<std::uint8_t>& dst, bool dilate) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        bool v = !dilate;
        for (auto [dx, dy] : off) {
          const int sx = x + dx, sy = y + dy;
          const bool s = sx >= 0 && sy >= 0 && sx < w && sy < h && src[static_cast<std::size_t>(sy) * w + sx] != 0;
          if (dilate && s) {
            v = true;
            break;
          }
          if (!dilate && !s) {
            v = false;
            break;
          }
        }
        dst[static_cast<std::size_t>(y) * w + x] = v ? 1 : 0;
      }
  };
  pass(buf, tmp, dilate_first);
  pass(tmp, buf, !dilate_first);
  BinaryMask out(m.width, m.height);
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) out.set(x, y, buf[static_cast<std::size_t>(y + pad) * w + x + pad] != 0);
  return out;
}

}  // namespace detail

inline BinaryMask morph_open(const BinaryMask& m, int radius) { return detail::morph(m, radius, false); }
inline BinaryMask morph_close(const BinaryMask& m, int radius) { return detail::morph(m, radius, true); }

/// Opening followed by closing with a disk of the given radius.
inline BinaryMask open_close(const BinaryMask& m, int radius) {
  require(radius >= 0, Errc::invalid_argument, "open_close: negative radius");
  return morph_close(morph_open(m, radius), radius);
}

/// Greedy mask NMS. Proposals are visited by descending score (ties by input
/// index); one is suppressed when its IoU with any kept mask is >= the
/// threshold. Returns kept input indices in visiting order.
inline std::vector<std::size_t> nms(std::span<const BinaryMask> masks, std::span<const double> scores,
                                    double iou_threshold) {
  require(masks.size() == scores.size(), Errc::dimension_mismatch, "nms: one score per mask");
  std::vector<std::size_t> order(masks.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  std::vector<Rect> boxes(masks.size());
  std::vector<std::size_t> areas(masks.size());
  for (std::size_t i = 0; i < masks.size(); ++i) {
    boxes[i] = masks[i].bbox();
    areas[i] = masks[i].area();
  }
  auto iou = [&](std::size_t a, std::size_t b) {
    const Rect r = intersect(boxes[a], boxes[b]);
    std::size_t inter = 0;
    for (int y = r.y; y < r.y_end(); ++y)
      for (int x = r.x; x < r.x_end(); ++x) inter += (masks[a](x, y) && masks[b](x, y)) ? 1 : 0;
    const std::size_t uni = areas[a] + areas[b] - inter;
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
  };

  std::vector<std::size_t> kept;
  for (auto i : order) {
    bool keep = true;
    for (auto k : kept)
      if (iou(i, k) >= iou_threshold) {
        keep = false;
        break;
      }
    if (keep) kept.push_back(i);
  }
  return kept;
}

}  // namespace spxr
