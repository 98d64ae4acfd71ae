#pragma once

// Seeded synthetic scenes for desk-scale runs: textured shapes on a textured
// background, visible-part ground truth, a region-embedding feature map and
// coarse 40x40 proposal windows derived from the ground truth.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "spxr/error.hpp"
#include "spxr/groundtruth.hpp"
#include "spxr/raster.hpp"
#include "spxr/refine.hpp"

namespace spxr {

struct SynthConfig {
  int width = 320;
  int height = 240;
  int min_objects = 3;
  int max_objects = 8;
  int min_visible_area = 30;
  double min_visible_fraction = 0.35;  // of the unoccluded shape; mostly hidden objects are dropped
  int feature_dim = 8;
  double feature_noise = 0.15;
  double texture_amplitude = 0.06;
  double pixel_noise = 0.03;
  double pad_min = 0.25;  // bbox padding per side, fraction of the bbox size
  double pad_max = 0.75;
  double blur_sigma = 1.5;      // grid cells
  int max_duplicates = 2;       // extra windows per object
  int max_distractors = 2;      // windows without an object
  int level_count = 3;
  int base_level_size = 32;     // windows below 2x this go to level 0

  void validate() const {
    require(width >= 16 && height >= 16, Errc::invalid_argument, "synth: image too small");
    require(min_objects >= 0 && max_objects >= min_objects, Errc::invalid_argument, "synth: bad object range");
    require(feature_dim >= 1, Errc::invalid_argument, "synth: feature_dim must be >= 1");
    require(pad_min >= 0.0 && pad_max >= pad_min, Errc::invalid_argument, "synth: bad padding range");
    require(blur_sigma >= 0.0, Errc::invalid_argument, "synth: negative blur");
    require(level_count >= 1 && base_level_size >= 1, Errc::invalid_argument, "synth: bad level layout");
  }
};

struct SynthScene {
  RgbImage image;
  FeatureMap features;
  std::vector<GtObject> objects;         // ids 1..n in painting order
  std::vector<CoarseProposal> proposals;
  std::vector<int> proposal_gt;          // object id, or 0 for distractors
};

/// Level by window size: each level doubles the size range of the previous.
inline int level_for_size(int side, int base, int level_count) {
  int level = 0;
  for (int s = 2 * base; side >= s && level + 1 < level_count; s *= 2) ++level;
  return level;
}

/// Area-weighted box average of the mask over `rect` onto a g x g grid;
/// pixels outside the image count as 0.
inline std::vector<float> box_downsample(const BinaryMask& m, const Rect& rect, int g) {
  std::vector<double> acc(static_cast<std::size_t>(g) * g, 0.0);
  const double sx = static_cast<double>(g) / rect.w, sy = static_cast<double>(g) / rect.h;
  const Rect clip = intersect(rect, Rect{0, 0, m.width, m.height});
  for (int y = clip.y; y < clip.y_end(); ++y) {
    const double y0 = (y - rect.y) * sy, y1 = y0 + sy;
    for (int x = clip.x; x < clip.x_end(); ++x) {
      if (!m(x, y)) continue;
      const double x0 = (x - rect.x) * sx, x1 = x0 + sx;
      for (int gy = static_cast<int>(y0); gy < g && gy < y1; ++gy) {
        const double oy = std::min<double>(y1, gy + 1) - std::max<double>(y0, gy);
        if (oy <= 0) continue;
        for (int gx = static_cast<int>(x0); gx < g && gx < x1; ++gx) {
          const double ox = std::min<double>(x1, gx + 1) - std::max<double>(x0, gx);
          if (ox > 0) acc[static_cast<std::size_t>(gy) * g + gx] += ox * oy;
        }
      }
    }
  }
  std::vector<float> out(acc.size());
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<float>(acc[i]);
  return out;
}

/// Separable gaussian on a g x g grid (edge clamp), then clamp to [0,1].
inline std::vector<float> blur_grid(const std::vector<float>& in, int g, double sigma) {
  std::vector<float> out(in);
  if (sigma > 0.0) {
    const int r = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
    double norm = 0.0;
    for (int i = -r; i <= r; ++i) norm += k[static_cast<std::size_t>(i + r)] = std::exp(-0.5 * i * i / (sigma * sigma));
    for (auto& v : k) v /= norm;
    std::vector<double> tmp(in.size());
    for (int y = 0; y < g; ++y)
      for (int x = 0; x < g; ++x) {
        double s = 0.0;
        for (int i = -r; i <= r; ++i) s += k[static_cast<std::size_t>(i + r)] * in[static_cast<std::size_t>(y) * g + std::clamp(x + i, 0, g - 1)];
        tmp[static_cast<std::size_t>(y) * g + x] = s;
      }
    for (int y = 0; y < g; ++y)
      for (int x = 0; x < g; ++x) {
        double s = 0.0;
        for (int i = -r; i <= r; ++i) s += k[static_cast<std::size_t>(i + r)] * tmp[static_cast<std::size_t>(std::clamp(y + i, 0, g - 1)) * g + x];
        out[static_cast<std::size_t>(y) * g + x] = static_cast<float>(s);
      }
  }
  for (auto& v : out) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

/// Coarse window for `mask` over `rect`: rasterize, box-downsample to 40x40,
/// blur, clamp.
inline CoarseProposal make_coarse_window(const BinaryMask& mask, const Rect& rect, double blur_sigma, int level,
                                         double score) {
  CoarseProposal cp;
  cp.rect = rect;
  cp.level = level;
  cp.score = score;
  cp.window = blur_grid(box_downsample(mask, rect, kWindowSize), kWindowSize, blur_sigma);
  return cp;
}

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 finalizer over the pair
  std::uint64_t z = seed * 0x9e3779b97f4a7c15ULL + index + 0x632be59bd9b4e5f5ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

struct Texture {
  double color[3];
  double fx, fy, phase, amp;
};

inline Texture random_texture(std::mt19937_64& rng, double amp) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Texture t{};
  for (double& c : t.color) c = 0.1 + 0.8 * u(rng);
  const double freq = 0.05 + 0.25 * u(rng), theta = u(rng) * std::numbers::pi;
  t.fx = freq * std::cos(theta);
  t.fy = freq * std::sin(theta);
  t.phase = u(rng) * 2.0 * std::numbers::pi;
  t.amp = amp * (0.5 + u(rng));
  return t;
}

inline double color_distance(const Texture& a, const Texture& b) {
  double d = 0.0;
  for (int c = 0; c < 3; ++c) d += (a.color[c] - b.color[c]) * (a.color[c] - b.color[c]);
  return std::sqrt(d);
}

// Shape membership test. Blobs are a lobed body with elongated limbs
// attached, a stand-in for the thin parts of real objects.
struct Shape {
  enum Kind { disk, rectangle, blob } kind = disk;
  double cx = 0, cy = 0, r = 0;           // disk/blob base radius
  double hw = 0, hh = 0, angle = 0;       // rectangle
  double harm_amp[4]{}, harm_phase[4]{};  // body radial harmonics (k = 2, 3, 5, 7)
  struct Limb {
    double x0, y0, x1, y1, half_width;
  };
  std::vector<Limb> limbs;

  bool contains(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    switch (kind) {
      case disk:
        return dx * dx + dy * dy <= r * r;
      case rectangle: {
        const double c = std::cos(angle), s = std::sin(angle);
        return std::abs(c * dx + s * dy) <= hw && std::abs(-s * dx + c * dy) <= hh;
      }
      case blob: {
        for (const auto& l : limbs) {
          // distance to the limb's axis segment
          const double vx = l.x1 - l.x0, vy = l.y1 - l.y0;
          const double t = std::clamp(((x - l.x0) * vx + (y - l.y0) * vy) / (vx * vx + vy * vy), 0.0, 1.0);
          const double ex = x - l.x0 - t * vx, ey = y - l.y0 - t * vy;
          if (ex * ex + ey * ey <= l.half_width * l.half_width) return true;
        }
        const double th = std::atan2(dy, dx);
        static constexpr int harmonics[4] = {2, 3, 5, 7};
        double rr = 1.0;
        for (int i = 0; i < 4; ++i) rr += harm_amp[i] * std::cos(harmonics[i] * th + harm_phase[i]);
        return std::sqrt(dx * dx + dy * dy) <= r * rr;
      }
    }
    return false;
  }
};

inline Shape random_shape(std::mt19937_64& rng, int w, int h) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Shape s;
  s.kind = static_cast<Shape::Kind>(std::min(2, static_cast<int>(u(rng) * 3.0)));
  const double scale = std::min(w, h);
  // log-uniform radius so that small and large objects both occur
  const double r = scale * 0.04 * std::exp(u(rng) * std::log(8.0));
  s.cx = u(rng) * w;
  s.cy = u(rng) * h;
  s.r = r;
  // rectangles range from squares to bars
  s.hw = r * (0.5 + 0.7 * u(rng));
  s.hh = s.hw * (0.15 + 0.85 * u(rng));
  s.angle = u(rng) * std::numbers::pi;
  // lobed outlines; amplitudes sum below 1 so the radius stays positive
  static constexpr double max_amp[4] = {0.2, 0.3, 0.25, 0.15};
  for (int i = 0; i < 4; ++i) {
    s.harm_amp[i] = max_amp[i] * u(rng);
    s.harm_phase[i] = u(rng) * 2.0 * std::numbers::pi;
  }
  if (s.kind == Shape::blob) {
    s.r *= 0.7;
    const int n = 2 + static_cast<int>(u(rng) * 3.0);
    for (int i = 0; i < n; ++i) {
      const double th = u(rng) * 2.0 * std::numbers::pi, len = r * (0.8 + 0.8 * u(rng));
      s.limbs.push_back({s.cx, s.cy, s.cx + len * std::cos(th), s.cy + len * std::sin(th), r * (0.08 + 0.10 * u(rng))});
    }
  }
  return s;
}

inline Rect padded_rect(const Rect& box, double pl, double pt, double pr, double pb) {
  const int l = std::max(1, static_cast<int>(std::lround(pl * box.w)));
  const int t = std::max(1, static_cast<int>(std::lround(pt * box.h)));
  const int r = std::max(1, static_cast<int>(std::lround(pr * box.w)));
  const int b = std::max(1, static_cast<int>(std::lround(pb * box.h)));
  return Rect{box.x - l, box.y - t, box.w + l + r, box.h + t + b};
}

}  // namespace detail

/// Background embedding shared by every scene of every dataset, the way a
/// trained extractor responds consistently to background.
inline std::vector<float> background_embedding(int dim) {
  std::mt19937_64 rng(detail::mix_seed(0x5eedULL, ~0ULL));
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<float> e(static_cast<std::size_t>(dim));
  for (auto& v : e) v = static_cast<float>(n(rng));
  return e;
}

/// Scene `index` of the dataset with the given seed; deterministic in both.
inline SynthScene generate_scene(const SynthConfig& cfg, std::uint64_t seed, std::uint64_t index) {
  cfg.validate();
  std::mt19937_64 rng(detail::mix_seed(seed, index));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int w = cfg.width, h = cfg.height;

  const detail::Texture bg = detail::random_texture(rng, cfg.texture_amplitude);
  const int n_shapes = cfg.min_objects + static_cast<int>(u(rng) * (cfg.max_objects - cfg.min_objects + 1));

  std::vector<int> owner(static_cast<std::size_t>(w) * h, 0);  // 0 = background, s+1 = shape s
  std::vector<std::size_t> full_area(static_cast<std::size_t>(n_shapes) + 1, 0);
  std::vector<detail::Texture> tex;
  for (int s = 0; s < n_shapes; ++s) {
    detail::Texture t = detail::random_texture(rng, cfg.texture_amplitude);
    for (int tries = 0; tries < 8 && detail::color_distance(t, bg) < 0.25; ++tries)
      t = detail::random_texture(rng, cfg.texture_amplitude);
    tex.push_back(t);
    const detail::Shape shape = detail::random_shape(rng, w, h);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if (shape.contains(x + 0.5, y + 0.5)) {
          owner[static_cast<std::size_t>(y) * w + x] = s + 1;
          ++full_area[static_cast<std::size_t>(s) + 1];
        }
  }

  // keep visible parts above the area and fraction floors, renumbered 1..n
  // in painting order
  std::vector<std::size_t> visible(static_cast<std::size_t>(n_shapes) + 1, 0);
  for (int o : owner) ++visible[static_cast<std::size_t>(o)];
  std::vector<int> object_of(static_cast<std::size_t>(n_shapes) + 1, 0);
  SynthScene scene;
  for (int s = 1; s <= n_shapes; ++s)
    if (visible[static_cast<std::size_t>(s)] >= static_cast<std::size_t>(cfg.min_visible_area) &&
        static_cast<double>(visible[static_cast<std::size_t>(s)]) >=
            cfg.min_visible_fraction * static_cast<double>(full_area[static_cast<std::size_t>(s)])) {
      object_of[static_cast<std::size_t>(s)] = static_cast<int>(scene.objects.size()) + 1;
      scene.objects.push_back(GtObject{object_of[static_cast<std::size_t>(s)], BinaryMask(w, h), "shape"});
    }

  // image
  scene.image = RgbImage(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      const int o = owner[i];
      const detail::Texture& t = o == 0 ? bg : tex[static_cast<std::size_t>(o - 1)];
      const double wave = t.amp * std::sin(t.fx * x + t.fy * y + t.phase);
      float* px = scene.image.pixel(i);
      for (int c = 0; c < 3; ++c)
        px[c] = static_cast<float>(std::clamp(t.color[c] + wave + cfg.pixel_noise * gauss(rng), 0.0, 1.0));
      if (const int obj = object_of[static_cast<std::size_t>(o)]; obj > 0)
        scene.objects[static_cast<std::size_t>(obj - 1)].mask.set(x, y);
    }

  // features: region embedding plus noise; dropped slivers read as background
  std::vector<std::vector<float>> emb(scene.objects.size() + 1);
  emb[0] = background_embedding(cfg.feature_dim);
  for (std::size_t o = 1; o < emb.size(); ++o) {
    emb[o].resize(static_cast<std::size_t>(cfg.feature_dim));
    for (auto& v : emb[o]) v = static_cast<float>(gauss(rng));
  }
  scene.features = FeatureMap(w, h, cfg.feature_dim);
  for (std::size_t i = 0; i < owner.size(); ++i) {
    const auto& e = emb[static_cast<std::size_t>(object_of[static_cast<std::size_t>(owner[i])])];
    auto f = scene.features.at(i);
    for (int c = 0; c < cfg.feature_dim; ++c) f[c] = e[static_cast<std::size_t>(c)] + static_cast<float>(cfg.feature_noise * gauss(rng));
  }

  // coarse proposals
  auto pad = [&] { return cfg.pad_min + (cfg.pad_max - cfg.pad_min) * u(rng); };
  // Windows of an object must threshold to IoU >= 0.5 with it. Fragmented
  // visible parts can miss that, so the padding is tightened until they
  // pass; a window that fails even with a 1 px margin is not emitted.
  auto add_object_window = [&](const GtObject& obj, double l, double t, double r, double b, double score) {
    const Rect box = obj.mask.bbox();
    for (double f : {1.0, 0.5, 0.25, 0.0}) {
      const Rect rect = detail::padded_rect(box, f * l, f * t, f * r, f * b);
      const int level = level_for_size(std::max(rect.w, rect.h), cfg.base_level_size, cfg.level_count);
      CoarseProposal cp = make_coarse_window(obj.mask, rect, cfg.blur_sigma, level, score);
      if (mask_iou(coarse_mask(cp, w, h), obj.mask) >= 0.5) {
        scene.proposals.push_back(std::move(cp));
        scene.proposal_gt.push_back(obj.id);
        return;
      }
    }
  };
  for (const auto& obj : scene.objects) {
    const double p = pad();
    add_object_window(obj, p, p, p, p, 0.6 + 0.4 * u(rng));
    const int dups = static_cast<int>(u(rng) * (cfg.max_duplicates + 1));
    for (int d = 0; d < dups; ++d) {
      const double l = pad(), t = pad(), r = pad(), b = pad();
      add_object_window(obj, l, t, r, b, 0.5 + 0.5 * u(rng));
    }
  }
  const int distractors = static_cast<int>(u(rng) * (cfg.max_distractors + 1));
  for (int d = 0; d < distractors; ++d) {
    detail::Shape s = detail::random_shape(rng, w, h);
    BinaryMask m(w, h);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if (s.contains(x + 0.5, y + 0.5)) m.set(x, y);
    if (m.empty()) continue;
    const double l = pad(), t = pad(), r = pad(), b = pad();
    const Rect rect = detail::padded_rect(m.bbox(), l, t, r, b);
    const int level = level_for_size(std::max(rect.w, rect.h), cfg.base_level_size, cfg.level_count);
    scene.proposals.push_back(make_coarse_window(m, rect, cfg.blur_sigma, level, 0.5 * u(rng)));
    scene.proposal_gt.push_back(0);
  }
  return scene;
}

}  // namespace spxr
