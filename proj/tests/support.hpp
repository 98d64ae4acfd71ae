#pragma once

// Helpers shared by the unit tests and the acceptance runner: scratch
// directories, random rasters, and reference implementations used as oracles.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "spxr/spxr.hpp"

namespace spxr::testkit {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    std::random_device rd;
    path_ = fs::temp_directory_path() /
            ("spxr_" + tag + "_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;

  const fs::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

inline RgbImage random_image(std::mt19937_64& rng, int w, int h) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  RgbImage img(w, h);
  for (auto& v : img.data) v = u(rng);
  return img;
}

inline FeatureMap random_features(std::mt19937_64& rng, int w, int h, int dim) {
  std::normal_distribution<float> n(0.0f, 1.0f);
  FeatureMap fm(w, h, dim);
  for (auto& v : fm.data) v = n(rng);
  return fm;
}

/// Random partition with at most `max_labels` raw ids, relabeled densely.
inline LabelMap random_label_map(std::mt19937_64& rng, int w, int h, std::uint32_t max_labels) {
  std::uniform_int_distribution<std::uint32_t> pick(0, max_labels - 1);
  std::vector<std::uint32_t> raw(static_cast<std::size_t>(w) * h);
  for (auto& r : raw) r = pick(rng);
  return LabelMap::from_raw(w, h, raw);
}

/// Partition into axis-aligned blocks of the given size.
inline LabelMap block_label_map(int w, int h, int bw, int bh) {
  std::vector<std::uint32_t> raw(static_cast<std::size_t>(w) * h);
  const int cols = (w + bw - 1) / bw;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) raw[static_cast<std::size_t>(y) * w + x] = static_cast<std::uint32_t>((y / bh) * cols + x / bw);
  return LabelMap::from_raw(w, h, raw);
}

inline BinaryMask rect_mask(int w, int h, const Rect& r) {
  BinaryMask m(w, h);
  for (int y = std::max(0, r.y); y < std::min(h, r.y_end()); ++y)
    for (int x = std::max(0, r.x); x < std::min(w, r.x_end()); ++x) m.set(x, y);
  return m;
}

inline LabelMap label_map_from_mask(const BinaryMask& m) {
  std::vector<std::uint32_t> raw(m.bits.begin(), m.bits.end());
  return LabelMap::from_raw(m.width, m.height, raw);
}

// ---------------------------------------------------------------------------
// Reference FH: explicit component labels, relabel-on-merge, no union-find.
// Quadratic, but obviously a transcription of the merge rule.

struct ReferenceEdge {
  double w;
  std::uint32_t a;
  std::uint32_t b;
};

inline double reference_color_distance(const RgbImage& img, std::size_t a, std::size_t b) {
  double s = 0.0;
  for (int c = 0; c < 3; ++c) {
    const double d = static_cast<double>(img.data[3 * a + c]) - img.data[3 * b + c];
    s += d * d;
  }
  return std::sqrt(s) / std::numbers::sqrt3;
}

inline double reference_cosine_distance(const FeatureMap& fm, std::size_t a, std::size_t b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (int c = 0; c < fm.dim; ++c) {
    const double x = fm.data[a * fm.dim + c], y = fm.data[b * fm.dim + c];
    na += x * x;
    nb += y * y;
  }
  if (na == 0.0 || nb == 0.0) return 0.5;
  for (int c = 0; c < fm.dim; ++c) dot += static_cast<double>(fm.data[a * fm.dim + c]) * fm.data[b * fm.dim + c];
  return std::acos(std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0)) / std::numbers::pi;
}

/// Same merge rule as segment(), without smoothing (sigma must be 0).
inline LabelMap reference_segment(const RgbImage& img, const FeatureMap* fm, const FhParams& p) {
  const int w = img.width, h = img.height;
  const std::size_t n = img.pixel_count();
  std::vector<ReferenceEdge> edges;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int dy = 0; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (dy == 0 && dx <= 0) continue;
          if (p.connectivity == 4 && dx != 0 && dy != 0) continue;
          const int nx = x + dx, ny = y + dy;
          if (nx < 0 || nx >= w || ny >= h) continue;
          const auto a = static_cast<std::uint32_t>(y * w + x), b = static_cast<std::uint32_t>(ny * w + nx);
          double weight = reference_color_distance(img, a, b);
          if (fm) weight = (1.0 - p.alpha) * weight + p.alpha * reference_cosine_distance(*fm, a, b);
          edges.push_back({weight, a, b});
        }
  std::sort(edges.begin(), edges.end(),
            [](const ReferenceEdge& x, const ReferenceEdge& y) { return std::tie(x.w, x.a, x.b) < std::tie(y.w, y.a, y.b); });

  std::vector<std::uint32_t> comp(n);
  for (std::size_t i = 0; i < n; ++i) comp[i] = static_cast<std::uint32_t>(i);
  std::vector<double> internal(n, 0.0);
  std::vector<std::size_t> size(n, 1);
  auto absorb = [&](std::uint32_t keep, std::uint32_t gone) {
    for (auto& c : comp)
      if (c == gone) c = keep;
    size[keep] += size[gone];
  };
  for (const auto& e : edges) {
    const auto ca = comp[e.a], cb = comp[e.b];
    if (ca == cb) continue;
    const double ta = internal[ca] + p.k / static_cast<double>(size[ca]);
    const double tb = internal[cb] + p.k / static_cast<double>(size[cb]);
    if (e.w <= std::min(ta, tb)) {
      absorb(ca, cb);
      internal[ca] = e.w;  // edges arrive sorted, so this is the largest used edge
    }
  }
  for (const auto& e : edges) {
    const auto ca = comp[e.a], cb = comp[e.b];
    if (ca != cb && (size[ca] < static_cast<std::size_t>(p.min_size) || size[cb] < static_cast<std::size_t>(p.min_size)))
      absorb(ca, cb);
  }
  return LabelMap::from_raw(w, h, comp);
}

/// One seeded FH oracle case: tiny random image, random parameters.
struct OracleCase {
  RgbImage image;
  FeatureMap features;
  FhParams params;
  bool with_features = false;
};

inline OracleCase make_oracle_case(std::uint64_t seed, double alpha) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> side(1, 8);
  OracleCase c;
  const int w = side(rng), h = side(rng);
  c.image = random_image(rng, w, h);
  c.with_features = alpha > 0.0;
  if (c.with_features) c.features = random_features(rng, w, h, 4);
  std::uniform_real_distribution<double> logk(std::log(0.05), std::log(3.0));
  c.params.k = std::exp(logk(rng));
  c.params.alpha = alpha;
  c.params.sigma = 0.0;
  c.params.connectivity = (rng() & 1) ? 8 : 4;
  c.params.min_size = static_cast<int>(rng() % 5);
  return c;
}

// ---------------------------------------------------------------------------
// reference pooling

inline std::vector<std::vector<double>> naive_feature_means(const LabelMap& lm, const FeatureMap& fm) {
  std::vector<std::vector<double>> out(lm.count, std::vector<double>(fm.dim, 0.0));
  for (std::uint32_t s = 0; s < lm.count; ++s) {
    std::size_t n = 0;
    for (int y = 0; y < lm.height; ++y)
      for (int x = 0; x < lm.width; ++x) {
        if (lm(x, y) != s) continue;
        ++n;
        for (int c = 0; c < fm.dim; ++c) out[s][c] += fm.at(static_cast<std::size_t>(y) * lm.width + x)[c];
      }
    for (auto& v : out[s]) v /= static_cast<double>(n);
  }
  return out;
}

/// Brute-force morphology straight from the set definitions, everything
/// outside the image being background.
inline BinaryMask reference_open_close(const BinaryMask& m, int r) {
  if (r == 0) return m;
  std::vector<std::pair<int, int>> disk;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx)
      if (dx * dx + dy * dy <= r * r) disk.emplace_back(dx, dy);
  // Work on a padded canvas so shapes touching the border behave as on the
  // infinite plane.
  const int pad = 2 * r, w = m.width + 2 * pad, h = m.height + 2 * pad;
  auto at = [&](const std::vector<char>& v, int x, int y) { return x >= 0 && y >= 0 && x < w && y < h && v[y * w + x]; };
  std::vector<char> a(static_cast<std::size_t>(w) * h, 0);
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) a[(y + pad) * w + x + pad] = m(x, y);
  auto erode = [&](const std::vector<char>& v) {
    std::vector<char> o(v.size(), 0);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        bool all = true;
        for (auto [dx, dy] : disk) all = all && at(v, x + dx, y + dy);
        o[y * w + x] = all;
      }
    return o;
  };
  auto dilate = [&](const std::vector<char>& v) {
    std::vector<char> o(v.size(), 0);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        bool any = false;
        for (auto [dx, dy] : disk) any = any || at(v, x + dx, y + dy);
        o[y * w + x] = any;
      }
    return o;
  };
  const auto result = erode(dilate(dilate(erode(a))));
  BinaryMask out(m.width, m.height);
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) out.set(x, y, result[(y + pad) * w + x + pad] != 0);
  return out;
}

// ---------------------------------------------------------------------------
// ground-truth selection fixtures

/// Roughly rectangular object with random holes, at least one pixel.
inline BinaryMask random_region(std::mt19937_64& rng, int w, int h) {
  BinaryMask m(w, h);
  const int x0 = static_cast<int>(rng() % (w - 2)), y0 = static_cast<int>(rng() % (h - 2));
  const int x1 = x0 + 2 + static_cast<int>(rng() % (w - x0 - 1)), y1 = y0 + 2 + static_cast<int>(rng() % (h - y0 - 1));
  for (int y = y0; y < std::min(y1, h); ++y)
    for (int x = x0; x < std::min(x1, w); ++x)
      if (rng() % 5) m.set(x, y);
  if (m.empty()) m.set(x0, y0);
  return m;
}

/// Nearest-seed partition with `seeds` random sites; compact superpixels
/// like a real segmentation, at most `seeds` of them.
inline LabelMap voronoi_label_map(std::mt19937_64& rng, int w, int h, int seeds) {
  std::vector<std::pair<int, int>> sites(static_cast<std::size_t>(seeds));
  for (auto& [sx, sy] : sites) {
    sx = static_cast<int>(rng() % w);
    sy = static_cast<int>(rng() % h);
  }
  std::vector<std::uint32_t> raw(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      std::size_t best = 0;
      int best_d = INT32_MAX;
      for (std::size_t s = 0; s < sites.size(); ++s) {
        const int d = (x - sites[s].first) * (x - sites[s].first) + (y - sites[s].second) * (y - sites[s].second);
        if (d < best_d) {
          best_d = d;
          best = s;
        }
      }
      raw[static_cast<std::size_t>(y) * w + x] = static_cast<std::uint32_t>(best);
    }
  return LabelMap::from_raw(w, h, raw);
}

// 10x2 map: A=0 (2 px), B=1 (2 px), C=2 (14 px), D=3 (2 px).
//   0 0 1 1 2 2 2 2 2 2
//   3 3 2 2 2 2 2 2 2 2
// The object takes one pixel of A, one of B and three of C. C alone is the
// best single superpixel (3/16) and greedy grows it to {A, B, C} = 5/18,
// but {A, B} = 2/7 is better.
struct SuboptimalInstance {
  LabelMap labels;
  GtObject object;
};

inline SuboptimalInstance greedy_suboptimal_instance() {
  const std::vector<std::uint32_t> raw{0, 0, 1, 1, 2, 2, 2, 2, 2, 2, 3, 3, 2, 2, 2, 2, 2, 2, 2, 2};
  BinaryMask m(10, 2);
  for (int x : {1, 2, 4, 5, 6}) m.set(x, 0);
  return {LabelMap::from_raw(10, 2, raw), GtObject{1, m, ""}};
}

// ---------------------------------------------------------------------------
// classifier gradient check (double precision, central differences)

struct GradientCheck {
  double relative_error = 0.0;  // ||analytic - numeric|| / (||analytic|| + ||numeric||)
  std::size_t parameters = 0;
};

inline GradientCheck gradient_check(std::uint64_t seed, double eps = 1e-4) {
  std::mt19937_64 rng(seed);
  const int input_dim = 2 + static_cast<int>(rng() % 5);
  std::vector<int> hidden(1 + rng() % 3);
  for (auto& h : hidden) h = 2 + static_cast<int>(rng() % 7);
  auto net = BasicMlp<double>::glorot(input_dim, hidden, rng());
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& l : net.layers)
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias(i) = 0.3 * n(rng);
  const Eigen::Index batch = 3 + static_cast<Eigen::Index>(rng() % 6);
  Batch<double> x(input_dim, batch);
  Eigen::Matrix<double, 1, Eigen::Dynamic> y(batch);
  for (Eigen::Index j = 0; j < batch; ++j) {
    for (int i = 0; i < input_dim; ++i) x(i, j) = n(rng);
    y(j) = static_cast<double>(rng() & 1);
  }
  BasicMlp<double> grad;
  bce_loss_and_gradient(net, x, y, &grad);

  double diff = 0.0, na = 0.0, nn = 0.0;
  GradientCheck out;
  auto probe = [&](double& param, double analytic) {
    const double keep = param;
    param = keep + eps;
    const double up = bce_loss_and_gradient<double>(net, x, y, nullptr);
    param = keep - eps;
    const double down = bce_loss_and_gradient<double>(net, x, y, nullptr);
    param = keep;
    const double numeric = (up - down) / (2.0 * eps);
    diff += (analytic - numeric) * (analytic - numeric);
    na += analytic * analytic;
    nn += numeric * numeric;
    ++out.parameters;
  };
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    auto& l = net.layers[li];
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) probe(l.weight(r, c), grad.layers[li].weight(r, c));
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) probe(l.bias(r), grad.layers[li].bias(r));
  }
  const double scale = std::sqrt(na) + std::sqrt(nn);
  out.relative_error = scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
  return out;
}

}  // namespace spxr::testkit
