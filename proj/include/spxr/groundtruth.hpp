#pragma once

// Superpixelized ground truth: the greedy maximum-IoU superpixel set per
// object, an exhaustive oracle for small instances, and pixel-pair affinity
// labels derived from the combined object masks.

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "spxr/error.hpp"
#include "spxr/raster.hpp"

namespace spxr {

struct GtObject {
  int id = 0;
  BinaryMask mask;
  std::string category;
};

struct SpxSelection {
  std::vector<std::uint32_t> superpixels;  // ascending
  double iou = 0.0;
  std::vector<double> trace;  // IoU after the seed and after every greedy addition
};

/// Per-superpixel overlap with one mask; only intersecting superpixels.
struct OverlapTable {
  std::vector<std::uint32_t> ids;     // ascending
  std::vector<std::uint64_t> inside;  // |s ∩ G|
  std::vector<std::uint64_t> area;    // |s|
  std::uint64_t gt_area = 0;
};

inline OverlapTable overlap_table(const LabelMap& lm, const BinaryMask& gt) {
  require(lm.width == gt.width && lm.height == gt.height, Errc::dimension_mismatch,
          "groundtruth: label map and mask dimensions differ");
  std::vector<std::uint64_t> inside(lm.count, 0), area(lm.count, 0);
  OverlapTable t;
  for (std::size_t i = 0; i < lm.labels.size(); ++i) {
    ++area[lm.labels[i]];
    if (gt.bits[i]) {
      ++inside[lm.labels[i]];
      ++t.gt_area;
    }
  }
  for (std::uint32_t s = 0; s < lm.count; ++s)
    if (inside[s] > 0) {
      t.ids.push_back(s);
      t.inside.push_back(inside[s]);
      t.area.push_back(area[s]);
    }
  return t;
}

namespace detail {

// IoU of a set given its total inside count and total outside count:
// in / (gt + out). Compared exactly by cross-multiplication.
struct IouFraction {
  std::uint64_t num = 0;
  std::uint64_t den = 1;
  double value() const { return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den); }
};

inline bool greater(const IouFraction& a, const IouFraction& b) {
  return static_cast<unsigned __int128>(a.num) * b.den > static_cast<unsigned __int128>(b.num) * a.den;
}

}  // namespace detail

/// Seeds with every superpixel fully inside the object (or, if none, the
/// single best superpixel) and greedily adds the superpixel that raises the
/// IoU most, lowest id on ties, until nothing improves it.
inline SpxSelection greedy_gt_set(const LabelMap& lm, const GtObject& gt) {
  const OverlapTable t = overlap_table(lm, gt.mask);
  SpxSelection sel;
  if (t.ids.empty()) return sel;
  const std::size_t k = t.ids.size();
  std::vector<char> used(k, 0);
  std::uint64_t in = 0, out = 0;
  auto frac = [&](std::uint64_t i, std::uint64_t o) { return detail::IouFraction{i, t.gt_area + o}; };

  for (std::size_t j = 0; j < k; ++j)
    if (t.inside[j] == t.area[j]) {
      used[j] = 1;
      in += t.inside[j];
    }
  if (in == 0) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j)
      if (detail::greater(frac(t.inside[j], t.area[j] - t.inside[j]), frac(t.inside[best], t.area[best] - t.inside[best])))
        best = j;
    used[best] = 1;
    in = t.inside[best];
    out = t.area[best] - t.inside[best];
  }
  sel.trace.push_back(frac(in, out).value());

  for (;;) {
    detail::IouFraction best_frac = frac(in, out);
    std::size_t best = k;
    for (std::size_t j = 0; j < k; ++j) {
      if (used[j]) continue;
      const auto f = frac(in + t.inside[j], out + t.area[j] - t.inside[j]);
      if (detail::greater(f, best_frac)) {
        best_frac = f;
        best = j;
      }
    }
    if (best == k) break;
    used[best] = 1;
    in += t.inside[best];
    out += t.area[best] - t.inside[best];
    sel.trace.push_back(best_frac.value());
  }
  for (std::size_t j = 0; j < k; ++j)
    if (used[j]) sel.superpixels.push_back(t.ids[j]);
  sel.iou = frac(in, out).value();
  return sel;
}

/// Exact maximum-IoU subset of the superpixels intersecting the object.
inline SpxSelection exhaustive_gt_set(const LabelMap& lm, const GtObject& gt, int max_superpixels = 15) {
  const OverlapTable t = overlap_table(lm, gt.mask);
  const std::size_t k = t.ids.size();
  require(static_cast<int>(k) <= max_superpixels && k < 63, Errc::instance_too_large,
          "exhaustive_gt_set: " + std::to_string(k) + " intersecting superpixels exceed the limit of " +
              std::to_string(max_superpixels));
  SpxSelection sel;
  if (k == 0) return sel;
  detail::IouFraction best{0, 1};
  std::uint64_t best_mask = 0;
  for (std::uint64_t mask = 1; mask < (1ULL << k); ++mask) {
    std::uint64_t in = 0, out = 0;
    for (std::size_t j = 0; j < k; ++j)
      if (mask >> j & 1ULL) {
        in += t.inside[j];
        out += t.area[j] - t.inside[j];
      }
    const detail::IouFraction f{in, t.gt_area + out};
    if (detail::greater(f, best)) {
      best = f;
      best_mask = mask;
    }
  }
  for (std::size_t j = 0; j < k; ++j)
    if (best_mask >> j & 1ULL) sel.superpixels.push_back(t.ids[j]);
  sel.iou = best.value();
  sel.trace.push_back(sel.iou);
  return sel;
}

/// Background 0 plus one region per object; objects are painted in
/// ascending id order, so the later id wins on overlaps. Region r > 0 is
/// the object at sorted position r-1.
inline std::vector<std::uint32_t> combine_objects(std::span<const GtObject> objects, int width, int height) {
  std::vector<const GtObject*> sorted;
  for (const auto& o : objects) {
    require(o.mask.width == width && o.mask.height == height, Errc::dimension_mismatch,
            "combine_objects: mask " + std::to_string(o.id) + " has wrong dimensions");
    sorted.push_back(&o);
  }
  std::stable_sort(sorted.begin(), sorted.end(), [](const GtObject* a, const GtObject* b) { return a->id < b->id; });
  std::vector<std::uint32_t> combined(static_cast<std::size_t>(width) * height, 0);
  for (std::size_t r = 0; r < sorted.size(); ++r)
    for (std::size_t i = 0; i < combined.size(); ++i)
      if (sorted[r]->mask.bits[i]) combined[i] = static_cast<std::uint32_t>(r + 1);
  return combined;
}

struct PixelPair {
  std::uint32_t i = 0;
  std::uint32_t j = 0;
  bool same = true;
};

/// Same/different-segment label for every lattice-neighbor pair (i < j)
/// under the requested connectivity.
inline std::vector<PixelPair> affinity_labels(std::span<const GtObject> objects, int width, int height,
                                              int connectivity = 4) {
  require(connectivity == 4 || connectivity == 8, Errc::invalid_argument, "affinity_labels: connectivity must be 4 or 8");
  const auto combined = combine_objects(objects, width, height);
  std::vector<PixelPair> pairs;
  auto add = [&](std::size_t a, std::size_t b) {
    pairs.push_back({static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b), combined[a] == combined[b]});
  };
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * width + x;
      if (x + 1 < width) add(i, i + 1);
      if (y + 1 < height) add(i, i + width);
      if (connectivity == 8 && y + 1 < height) {
        if (x + 1 < width) add(i, i + width + 1);
        if (x > 0) add(i, i + width - 1);
      }
    }
  return pairs;
}

/// Affinity labels as a feature map for the extractor trainer. Channel 0
/// pairs a pixel with its right neighbor, channel 1 with the one below
/// (8-connectivity adds down-right and down-left). 1 = same segment,
/// 0 = different, -1 = no neighbor in that direction.
inline FeatureMap affinity_feature_map(std::span<const GtObject> objects, int width, int height, int connectivity = 4) {
  require(connectivity == 4 || connectivity == 8, Errc::invalid_argument, "affinity_labels: connectivity must be 4 or 8");
  const auto combined = combine_objects(objects, width, height);
  const int dim = connectivity == 8 ? 4 : 2;
  FeatureMap fm(width, height, dim, -1.0f);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * width + x;
      auto f = fm.at(i);
      auto label = [&](std::size_t j) { return combined[i] == combined[j] ? 1.0f : 0.0f; };
      if (x + 1 < width) f[0] = label(i + 1);
      if (y + 1 < height) f[1] = label(i + width);
      if (dim == 4 && y + 1 < height) {
        if (x + 1 < width) f[2] = label(i + width + 1);
        if (x > 0) f[3] = label(i + width - 1);
      }
    }
  return fm;
}

}  // namespace spxr
