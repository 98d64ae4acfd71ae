#pragma once

// Superpixel refinement of coarse proposal windows: upsample the window,
// pool it into per-superpixel mask priors, append the pooled features of the
// proposal's pyramid level, classify, and rasterize the object superpixels.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "spxr/error.hpp"
#include "spxr/mlp.hpp"
#include "spxr/parallel.hpp"
#include "spxr/pool.hpp"
#include "spxr/raster.hpp"

namespace spxr {

inline constexpr int kWindowSize = 40;

struct CoarseProposal {
  std::vector<float> window = std::vector<float>(kWindowSize * kWindowSize, 0.0f);  // row-major probabilities
  Rect rect;                                                                        // image coordinates
  int level = 0;
  double score = 0.0;

  void validate(int image_width, int image_height) const {
    require(window.size() == static_cast<std::size_t>(kWindowSize * kWindowSize), Errc::dimension_mismatch,
            "coarse proposal: window must be 40x40");
    require(!rect.empty() && !intersect(rect, Rect{0, 0, image_width, image_height}).empty(),
            Errc::invalid_argument, "coarse proposal: rect does not intersect the image");
    require(level >= 0, Errc::invalid_argument, "coarse proposal: negative level");
  }
};

/// Everything a level contributes to refinement, computed once per level and
/// shared read-only by all proposals of that level.
struct LevelBundle {
  int level = 0;
  LabelMap labels;
  std::vector<PooledVector> features;  // indexed by superpixel id
  int dim = 0;
  SuperpixelStats stats;
};

inline LevelBundle make_level_bundle(int level, LabelMap labels, const FeatureMap& fm, const RgbImage& img) {
  LevelBundle b;
  b.level = level;
  b.features = pool_features(labels, fm);
  b.dim = fm.dim;
  b.stats = compute_stats(labels, img);
  b.labels = std::move(labels);
  return b;
}

struct RefinedProposal {
  std::vector<std::uint32_t> superpixels;  // object superpixels, ascending
  BinaryMask mask;
  double score = 0.0;
  int level = 0;
  // classifier output for every superpixel intersecting the window
  std::vector<std::pair<std::uint32_t, double>> probabilities;
};

/// Bilinear resampling of a gw x gh grid to w x h; grid samples sit at cell
/// centers and the result is clamped to [0,1].
inline RealMap upsample_grid(std::span<const float> grid, int gw, int gh, int w, int h) {
  require(grid.size() == static_cast<std::size_t>(gw) * gh && gw > 0 && gh > 0, Errc::dimension_mismatch,
          "upsample: grid size mismatch");
  require(w > 0 && h > 0, Errc::invalid_argument, "upsample: empty target");
  RealMap out(w, h);
  auto src = [&](int x, int y) { return static_cast<double>(grid[static_cast<std::size_t>(y) * gw + x]); };
  for (int y = 0; y < h; ++y) {
    const double v = std::clamp((y + 0.5) * gh / h - 0.5, 0.0, gh - 1.0);
    const int y0 = static_cast<int>(std::floor(v));
    const int y1 = std::min(y0 + 1, gh - 1);
    const double fy = v - y0;
    for (int x = 0; x < w; ++x) {
      const double u = std::clamp((x + 0.5) * gw / w - 0.5, 0.0, gw - 1.0);
      const int x0 = static_cast<int>(std::floor(u));
      const int x1 = std::min(x0 + 1, gw - 1);
      const double fx = u - x0;
      const double top = (1.0 - fx) * src(x0, y0) + fx * src(x1, y0);
      const double bottom = (1.0 - fx) * src(x0, y1) + fx * src(x1, y1);
      out(x, y) = std::clamp((1.0 - fy) * top + fy * bottom, 0.0, 1.0);
    }
  }
  return out;
}

inline RealMap upsample_window(const CoarseProposal& cp) {
  return upsample_grid(cp.window, kWindowSize, kWindowSize, cp.rect.w, cp.rect.h);
}

/// Thresholded upsampled window pasted into an image-sized mask (p > threshold).
inline BinaryMask coarse_mask(const CoarseProposal& cp, int width, int height, double threshold = 0.5) {
  BinaryMask m(width, height);
  const RealMap up = upsample_window(cp);
  const Rect clip = intersect(cp.rect, Rect{0, 0, width, height});
  for (int y = clip.y; y < clip.y_end(); ++y)
    for (int x = clip.x; x < clip.x_end(); ++x) m.set(x, y, up(x - cp.rect.x, y - cp.rect.y) > threshold);
  return m;
}

/// Rasterizes the union of the given superpixels at full extent.
inline BinaryMask rasterize_superpixels(const LabelMap& lm, std::span<const std::uint32_t> ids,
                                        const SuperpixelStats* stats = nullptr) {
  BinaryMask m(lm.width, lm.height);
  if (ids.empty()) return m;
  std::vector<char> on(lm.count, 0);
  Rect area;
  for (auto id : ids) {
    on[id] = 1;
    area = stats ? unite(area, stats->superpixels[id].bbox) : Rect{0, 0, lm.width, lm.height};
  }
  for (int y = area.y; y < area.y_end(); ++y)
    for (int x = area.x; x < area.x_end(); ++x)
      if (on[lm(x, y)]) m.set(x, y);
  return m;
}

/// Superpixels intersecting the window and their classifier inputs
/// ([window prior | pooled features]), ordered by id.
struct RefinementInputs {
  std::vector<std::uint32_t> ids;
  std::vector<std::vector<double>> inputs;
};

inline RefinementInputs refinement_inputs(const CoarseProposal& cp, const LevelBundle& bundle) {
  const auto& lm = bundle.labels;
  cp.validate(lm.width, lm.height);
  require(cp.level == bundle.level, Errc::level_mismatch,
          "refine: proposal level " + std::to_string(cp.level) + " does not match bundle level " +
              std::to_string(bundle.level));
  require(bundle.features.size() == lm.count, Errc::dimension_mismatch, "refine: pooled features do not cover the label map");

  const auto priors = pool_scalar(lm, upsample_window(cp), cp.rect);
  RefinementInputs r;
  r.ids.reserve(priors.size());
  r.inputs.reserve(priors.size());
  for (const auto& pv : priors) {
    std::vector<double> in;
    in.reserve(1 + static_cast<std::size_t>(bundle.dim));
    in.push_back(pv.values[0]);
    const auto& f = bundle.features[pv.id].values;
    in.insert(in.end(), f.begin(), f.end());
    r.ids.push_back(pv.id);
    r.inputs.push_back(std::move(in));
  }
  return r;
}

/// Refinement with an arbitrary superpixel classifier. `classifier` receives
/// the superpixel ids intersecting the window and their inputs and returns
/// one object probability per input.
template <class Classifier>
RefinedProposal refine_with(const CoarseProposal& cp, const LevelBundle& bundle, Classifier&& classifier,
                            double threshold = 0.5) {
  const auto& lm = bundle.labels;
  auto [ids, inputs] = refinement_inputs(cp, bundle);
  const std::vector<double> probs = classifier(std::span<const std::uint32_t>(ids),
                                               std::span<const std::vector<double>>(inputs));
  require(probs.size() == ids.size(), Errc::dimension_mismatch, "refine: classifier returned wrong count");
  const auto decisions = classify_probabilities(probs, threshold);

  RefinedProposal out;
  out.score = cp.score;
  out.level = cp.level;
  out.probabilities.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out.probabilities.emplace_back(ids[i], probs[i]);
    if (decisions[i]) out.superpixels.push_back(ids[i]);
  }
  out.mask = rasterize_superpixels(lm, out.superpixels, bundle.stats.count() == lm.count ? &bundle.stats : nullptr);
  return out;
}

inline RefinedProposal refine(const CoarseProposal& cp, const LevelBundle& bundle, const MlpWeights& weights,
                              double threshold = 0.5) {
  require(weights.input_dim() == 1 + bundle.dim, Errc::dimension_mismatch,
          "refine: classifier input dim " + std::to_string(weights.input_dim()) + " != 1 + feature dim " +
              std::to_string(bundle.dim));
  return refine_with(
      cp, bundle,
      [&](std::span<const std::uint32_t>, std::span<const std::vector<double>> inputs) {
        return inputs.empty() ? std::vector<double>{} : forward(weights, inputs);
      },
      threshold);
}

inline const LevelBundle* find_bundle(std::span<const LevelBundle> bundles, int level) {
  for (const auto& b : bundles)
    if (b.level == level) return &b;
  return nullptr;
}

/// Refines every proposal against the bundle of its level. Output order
/// matches input order; failures are collected and reported together.
inline std::vector<RefinedProposal> refine_batch(std::span<const CoarseProposal> proposals,
                                                 std::span<const LevelBundle> bundles, const MlpWeights& weights,
                                                 double threshold = 0.5) {
  std::vector<RefinedProposal> out(proposals.size());
  std::vector<std::string> errors(proposals.size());
  parallel_for(proposals.size(), [&](std::size_t i) {
    try {
      const LevelBundle* b = find_bundle(bundles, proposals[i].level);
      require(b != nullptr, Errc::level_mismatch, "no bundle for level " + std::to_string(proposals[i].level));
      out[i] = refine(proposals[i], *b, weights, threshold);
    } catch (const Error& e) {
      errors[i] = e.what();
    }
  });
  std::string report;
  for (std::size_t i = 0; i < errors.size(); ++i)
    if (!errors[i].empty()) report += (report.empty() ? "" : "; ") + ("proposal " + std::to_string(i) + ": " + errors[i]);
  if (!report.empty()) fail(Errc::invalid_argument, "refine_batch: " + report);
  return out;
}

}  // namespace spxr
