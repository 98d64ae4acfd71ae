#pragma once

// Graph-based (Felzenszwalb-Huttenlocher) segmentation with a blended edge
// distance: (1-alpha) * color distance + alpha * feature cosine distance.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "spxr/error.hpp"
#include "spxr/parallel.hpp"
#include "spxr/raster.hpp"

namespace spxr {

struct FhParams {
  double k = 0.5;       // merge threshold scale
  double alpha = 0.2;   // weight of the feature cosine distance
  int min_size = 20;    // minimum superpixel area
  int connectivity = 8; // 4 or 8
  double sigma = 0.8;   // gaussian pre-smoothing of the color channels

  void validate() const {
    require(k > 0.0, Errc::invalid_argument, "fh: k must be positive");
    require(alpha >= 0.0 && alpha <= 1.0, Errc::invalid_argument, "fh: alpha must lie in [0,1]");
    require(min_size >= 0, Errc::invalid_argument, "fh: min_size must be non-negative");
    require(connectivity == 4 || connectivity == 8, Errc::invalid_argument, "fh: connectivity must be 4 or 8");
    require(sigma >= 0.0, Errc::invalid_argument, "fh: sigma must be non-negative");
  }
};

struct Edge {
  std::uint32_t a = 0;  // a < b
  std::uint32_t b = 0;
  double w = 0.0;
};

inline bool edge_order(const Edge& x, const Edge& y) {
  if (x.w != y.w) return x.w < y.w;
  if (x.a != y.a) return x.a < y.a;
  return x.b < y.b;
}

struct EdgeList {
  int width = 0;
  int height = 0;
  std::vector<Edge> edges;             // sorted by (w, a, b)
  std::size_t zero_feature_pairs = 0;  // pairs where a feature vector was all zeros
};

/// L2 color distance normalized by sqrt(3); in [0,1] for channels in [0,1].
inline double delta_fh(std::span<const float> p, std::span<const float> q) {
  const double dr = static_cast<double>(p[0]) - q[0];
  const double dg = static_cast<double>(p[1]) - q[1];
  const double db = static_cast<double>(p[2]) - q[2];
  return std::sqrt(dr * dr + dg * dg + db * db) / std::numbers::sqrt3;
}

namespace detail {

inline double squared_norm(std::span<const float> f) {
  double s = 0.0;
  for (float v : f) s += static_cast<double>(v) * v;
  return s;
}

// Shared by delta_cos and the edge builder (which caches the norms).
inline double angular_distance(std::span<const float> f, std::span<const float> g, double norm_f, double norm_g,
                               bool* zero_vector) {
  if (norm_f == 0.0 || norm_g == 0.0) {
    if (zero_vector) *zero_vector = true;
    return 0.5;
  }
  double dot = 0.0;
  for (std::size_t c = 0; c < f.size(); ++c) dot += static_cast<double>(f[c]) * g[c];
  const double cosine = std::clamp(dot / (norm_f * norm_g), -1.0, 1.0);
  return std::acos(cosine) / std::numbers::pi;
}

}  // namespace detail

/// Angle between two feature vectors divided by pi, in [0,1]. A zero vector
/// has no direction; the distance is then 0.5 and *zero_vector is set.
inline double delta_cos(std::span<const float> f, std::span<const float> g, bool* zero_vector = nullptr) {
  require(f.size() == g.size(), Errc::dimension_mismatch, "delta_cos: feature dimension mismatch");
  return detail::angular_distance(f, g, std::sqrt(detail::squared_norm(f)), std::sqrt(detail::squared_norm(g)),
                                  zero_vector);
}

inline double blend_distance(double color_distance, double feature_distance, double alpha) {
  return (1.0 - alpha) * color_distance + alpha * feature_distance;
}

inline double delta_deepfh(std::span<const float> p, std::span<const float> q, std::span<const float> f,
                           std::span<const float> g, double alpha, bool* zero_vector = nullptr) {
  return blend_distance(delta_fh(p, q), delta_cos(f, g, zero_vector), alpha);
}

/// Separable gaussian blur of the color channels, edge-clamped. sigma == 0
/// returns the input unchanged.
inline RgbImage smooth_image(const RgbImage& img, double sigma) {
  if (sigma <= 0.0 || img.pixel_count() == 0) return img;
  const int radius = static_cast<int>(std::ceil(4.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(radius) + 1);
  double sum = 0.0;
  for (int i = 0; i <= radius; ++i) {
    kernel[i] = std::exp(-0.5 * (i / sigma) * (i / sigma));
    sum += i == 0 ? kernel[i] : 2.0 * kernel[i];
  }
  for (auto& v : kernel) v /= sum;

  const int w = img.width, h = img.height;
  std::vector<double> tmp(img.data.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        double acc = kernel[0] * img.pixel(x, y)[c];
        for (int i = 1; i <= radius; ++i)
          acc += kernel[i] * (img.pixel(std::max(x - i, 0), y)[c] + img.pixel(std::min(x + i, w - 1), y)[c]);
        tmp[(static_cast<std::size_t>(y) * w + x) * 3 + c] = acc;
      }
  RgbImage out(w, h);
  auto at = [&](int x, int y, int c) { return tmp[(static_cast<std::size_t>(y) * w + x) * 3 + c]; };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        double acc = kernel[0] * at(x, y, c);
        for (int i = 1; i <= radius; ++i) acc += kernel[i] * (at(x, std::max(y - i, 0), c) + at(x, std::min(y + i, h - 1), c));
        out.pixel(x, y)[c] = static_cast<float>(std::clamp(acc, 0.0, 1.0));
      }
  return out;
}

/// One edge per lattice-neighbor pair, weighted by the blended distance and
/// sorted by (weight, a, b). Without features the weight is the color
/// distance alone.
inline EdgeList build_edges(const RgbImage& img, const FeatureMap* features, const FhParams& params) {
  params.validate();
  if (features) {
    require(features->width == img.width && features->height == img.height, Errc::dimension_mismatch,
            "build_edges: feature map and image dimensions differ");
    require(features->data.size() == features->pixel_count() * features->dim, Errc::dimension_mismatch,
            "build_edges: malformed feature map");
  }
  const RgbImage smooth = smooth_image(img, params.sigma);
  const int w = img.width, h = img.height;
  const std::size_t n = img.pixel_count();

  std::vector<double> norms;
  if (features) {
    norms.resize(n);
    for (std::size_t i = 0; i < n; ++i) norms[i] = std::sqrt(detail::squared_norm(features->at(i)));
  }

  EdgeList out;
  out.width = w;
  out.height = h;
  const std::size_t per_pixel = params.connectivity == 8 ? 4 : 2;
  out.edges.reserve(n * per_pixel);

  auto add = [&](std::size_t a, std::size_t b) {
    const double color = delta_fh({smooth.pixel(a), 3}, {smooth.pixel(b), 3});
    double weight = color;
    if (features) {
      bool zero = false;
      const double cosd = detail::angular_distance(features->at(a), features->at(b), norms[a], norms[b], &zero);
      if (zero) ++out.zero_feature_pairs;
      weight = blend_distance(color, cosd, params.alpha);
    }
    out.edges.push_back(Edge{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b), weight});
  };

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (x + 1 < w) add(i, i + 1);
      if (y + 1 < h) add(i, i + w);
      if (params.connectivity == 8 && y + 1 < h) {
        if (x + 1 < w) add(i, i + w + 1);
        if (x > 0) add(i, i + w - 1);
      }
    }
  }
  std::sort(out.edges.begin(), out.edges.end(), edge_order);
  return out;
}

namespace detail {

class DisjointSet {
 public:
  explicit DisjointSet(std::size_t n) : parent_(n), rank_(n, 0), size_(n, 1), sets_(n) {
    for (std::size_t i = 0; i < n; ++i) parent_[i] = static_cast<std::uint32_t>(i);
  }

  std::uint32_t find(std::uint32_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  // Returns the new root.
  std::uint32_t join(std::uint32_t a, std::uint32_t b) {
    if (rank_[a] < rank_[b]) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
    if (rank_[a] == rank_[b]) ++rank_[a];
    --sets_;
    return a;
  }

  std::uint32_t size(std::uint32_t root) const { return size_[root]; }
  std::size_t set_count() const { return sets_; }

 private:
  std::vector<std::uint32_t> parent_;
  std::vector<std::uint8_t> rank_;
  std::vector<std::uint32_t> size_;
  std::size_t sets_;
};

inline DisjointSet merge_components(const EdgeList& el, const FhParams& params) {
  const std::size_t n = static_cast<std::size_t>(el.width) * el.height;
  DisjointSet ds(n);
  // threshold[root] = Int(C) + k / |C|
  std::vector<double> threshold(n, params.k);
  for (const Edge& e : el.edges) {
    std::uint32_t a = ds.find(e.a), b = ds.find(e.b);
    if (a == b) continue;
    if (e.w <= threshold[a] && e.w <= threshold[b]) {
      const std::uint32_t root = ds.join(a, b);
      threshold[root] = e.w + params.k / ds.size(root);
    }
  }
  if (params.min_size > 1) {
    const auto min_size = static_cast<std::uint32_t>(params.min_size);
    for (const Edge& e : el.edges) {
      std::uint32_t a = ds.find(e.a), b = ds.find(e.b);
      if (a != b && (ds.size(a) < min_size || ds.size(b) < min_size)) ds.join(a, b);
    }
  }
  return ds;
}

}  // namespace detail

/// Runs the merge pass over a prebuilt edge list. Labels are dense in
/// row-major first-occurrence order.
inline LabelMap segment_edges(const EdgeList& el, const FhParams& params) {
  params.validate();
  auto ds = detail::merge_components(el, params);
  const std::size_t n = static_cast<std::size_t>(el.width) * el.height;
  std::vector<std::uint32_t> roots(n);
  for (std::size_t i = 0; i < n; ++i) roots[i] = ds.find(static_cast<std::uint32_t>(i));
  return LabelMap::from_raw(el.width, el.height, roots);
}

/// Number of superpixels segment_edges would produce, without labeling.
inline std::size_t count_segments(const EdgeList& el, const FhParams& params) {
  return detail::merge_components(el, params).set_count();
}

inline LabelMap segment(const RgbImage& img, const FeatureMap* features, const FhParams& params) {
  return segment_edges(build_edges(img, features, params), params);
}

struct SegmentationInput {
  const RgbImage* image = nullptr;
  const FeatureMap* features = nullptr;
};

struct CalibrationOptions {
  double k_lo = 1e-4;
  double k_hi = 10.0;
  double tolerance = 0.10;  // relative to the target
  int max_iterations = 20;
};

struct CalibrationResult {
  FhParams params;
  double mean_count = 0.0;
  bool reached = false;  // false: best effort, target not hit within tolerance
  int iterations = 0;
};

/// Searches k (log-scale bisection) so that the mean superpixel count over
/// the inputs approaches target_count. The template's own k is tried first.
inline CalibrationResult calibrate(std::span<const SegmentationInput> inputs, int target_count,
                                   const FhParams& tmpl, const CalibrationOptions& opt = {}) {
  require(!inputs.empty(), Errc::invalid_argument, "calibrate: empty image set");
  require(target_count >= 1, Errc::invalid_argument, "calibrate: target count must be >= 1");
  tmpl.validate();

  // Edge weights do not depend on k or min_size, so they are built once.
  std::vector<EdgeList> edges(inputs.size());
  parallel_for(inputs.size(), [&](std::size_t i) {
    require(inputs[i].image != nullptr, Errc::invalid_argument, "calibrate: missing image");
    edges[i] = build_edges(*inputs[i].image, inputs[i].features, tmpl);
  });

  auto mean_count = [&](double k) {
    FhParams p = tmpl;
    p.k = k;
    std::vector<std::size_t> counts(edges.size());
    parallel_for(edges.size(), [&](std::size_t i) { counts[i] = count_segments(edges[i], p); });
    double total = 0.0;
    for (auto c : counts) total += static_cast<double>(c);
    return total / static_cast<double>(counts.size());
  };

  const double target = target_count;
  CalibrationResult best;
  best.params = tmpl;
  double best_gap = std::numeric_limits<double>::infinity();
  double lo = opt.k_lo, hi = opt.k_hi;

  auto evaluate = [&](double k) {
    ++best.iterations;
    const double c = mean_count(k);
    const double gap = std::abs(c - target);
    if (gap < best_gap) {
      best_gap = gap;
      best.params.k = k;
      best.mean_count = c;
    }
    // larger k merges more, so a count above target asks for a larger k
    if (c > target)
      lo = std::max(lo, k);
    else
      hi = std::min(hi, k);
    return gap <= opt.tolerance * target;
  };

  if (evaluate(tmpl.k)) {
    best.reached = true;
    return best;
  }
  while (best.iterations < opt.max_iterations && lo < hi) {
    if (evaluate(std::sqrt(lo * hi))) {
      best.reached = true;
      return best;
    }
  }
  return best;
}

}  // namespace spxr
