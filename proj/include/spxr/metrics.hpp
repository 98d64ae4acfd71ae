#pragma once

// Evaluation: average recall (AR@n, overall and by object size), boundary
// recall, undersegmentation and oversegmentation error, achievable IoU
// (AIoU), best-proposal IoU (AVGIoU) and their ratio.

#include <algorithm>
#include <array>
#include <cstdint>
#include <iomanip>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "spxr/error.hpp"
#include "spxr/groundtruth.hpp"
#include "spxr/raster.hpp"

namespace spxr {

struct MetricsConfig {
  std::vector<double> ar_iou_thresholds{0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95};
  std::vector<int> budgets{10, 100, 1000};
  int boundary_tolerance = 2;        // Chebyshev distance, pixels
  double oe_overlap_fraction = 0.05; // superpixel counts toward a segment if overlap > fraction * |s|

  void validate() const {
    require(!ar_iou_thresholds.empty(), Errc::invalid_argument, "metrics: no IoU thresholds");
    for (std::size_t i = 0; i < ar_iou_thresholds.size(); ++i) {
      require(ar_iou_thresholds[i] > 0.0 && ar_iou_thresholds[i] <= 1.0, Errc::invalid_argument,
              "metrics: IoU thresholds must lie in (0,1]");
      if (i > 0)
        require(ar_iou_thresholds[i] > ar_iou_thresholds[i - 1], Errc::invalid_argument,
                "metrics: IoU thresholds must be strictly increasing");
    }
    for (int n : budgets) require(n >= 1, Errc::invalid_argument, "metrics: budgets must be positive");
    require(boundary_tolerance >= 0, Errc::invalid_argument, "metrics: negative boundary tolerance");
  }
};

struct ScoredMask {
  BinaryMask mask;
  double score = 0.0;
};

enum class SizeClass { small, medium, large };

inline SizeClass size_class(std::size_t area) {
  if (area < 32 * 32) return SizeClass::small;
  if (area < 96 * 96) return SizeClass::medium;
  return SizeClass::large;
}

struct ArResult {
  std::vector<int> budgets;
  std::vector<double> overall, small, medium, large;
  std::size_t objects = 0, n_small = 0, n_medium = 0, n_large = 0;
};

namespace detail {

struct MaskGeometry {
  Rect box;
  std::size_t area = 0;
};

inline MaskGeometry geometry(const BinaryMask& m) { return {m.bbox(), m.area()}; }

inline double fast_iou(const BinaryMask& a, const MaskGeometry& ga, const BinaryMask& b, const MaskGeometry& gb) {
  require(a.width == b.width && a.height == b.height, Errc::dimension_mismatch, "mask_iou: dimension mismatch");
  const Rect r = intersect(ga.box, gb.box);
  std::size_t inter = 0;
  for (int y = r.y; y < r.y_end(); ++y)
    for (int x = r.x; x < r.x_end(); ++x) inter += (a(x, y) && b(x, y)) ? 1 : 0;
  const std::size_t uni = ga.area + gb.area - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

inline std::vector<std::size_t> by_score(std::span<const ScoredMask> proposals) {
  std::vector<std::size_t> order(proposals.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return proposals[a].score > proposals[b].score; });
  return order;
}

}  // namespace detail

/// AR@n: for every IoU threshold, proposals (descending score, top n per
/// image) are matched one-to-one to the unmatched object they overlap most
/// with IoU >= threshold; AR is the recall averaged over thresholds.
inline ArResult average_recall(std::span<const std::vector<ScoredMask>> proposals,
                               std::span<const std::vector<GtObject>> gts, const MetricsConfig& cfg) {
  cfg.validate();
  require(proposals.size() == gts.size(), Errc::dimension_mismatch, "average_recall: one proposal list per image");
  ArResult res;
  res.budgets = cfg.budgets;
  const std::size_t nb = cfg.budgets.size();
  const int max_budget = *std::max_element(cfg.budgets.begin(), cfg.budgets.end());
  // recalled[budget][class] summed over thresholds
  std::vector<std::array<double, 4>> recalled(nb, std::array<double, 4>{});

  for (std::size_t img = 0; img < gts.size(); ++img) {
    const auto& objs = gts[img];
    const auto& props = proposals[img];
    std::vector<SizeClass> cls(objs.size());
    std::vector<detail::MaskGeometry> og(objs.size());
    for (std::size_t g = 0; g < objs.size(); ++g) {
      og[g] = detail::geometry(objs[g].mask);
      cls[g] = size_class(og[g].area);
      ++res.objects;
      (cls[g] == SizeClass::small ? res.n_small : cls[g] == SizeClass::medium ? res.n_medium : res.n_large)++;
    }
    auto order = detail::by_score(props);
    if (order.size() > static_cast<std::size_t>(max_budget)) order.resize(static_cast<std::size_t>(max_budget));
    std::vector<std::vector<double>> iou(order.size(), std::vector<double>(objs.size()));
    for (std::size_t p = 0; p < order.size(); ++p) {
      const auto& pm = props[order[p]].mask;
      const auto pg = detail::geometry(pm);
      for (std::size_t g = 0; g < objs.size(); ++g) iou[p][g] = detail::fast_iou(pm, pg, objs[g].mask, og[g]);
    }
    for (std::size_t b = 0; b < nb; ++b) {
      const std::size_t n = std::min(order.size(), static_cast<std::size_t>(cfg.budgets[b]));
      for (double t : cfg.ar_iou_thresholds) {
        std::vector<char> matched(objs.size(), 0);
        for (std::size_t p = 0; p < n; ++p) {
          std::size_t best = objs.size();
          double best_iou = -1.0;
          for (std::size_t g = 0; g < objs.size(); ++g)
            if (!matched[g] && iou[p][g] >= t && iou[p][g] > best_iou) {
              best = g;
              best_iou = iou[p][g];
            }
          if (best < objs.size()) matched[best] = 1;
        }
        for (std::size_t g = 0; g < objs.size(); ++g)
          if (matched[g]) {
            recalled[b][0] += 1.0;
            recalled[b][1 + static_cast<int>(cls[g])] += 1.0;
          }
      }
    }
  }
  const double nt = static_cast<double>(cfg.ar_iou_thresholds.size());
  auto ratio = [&](double r, std::size_t total) { return total == 0 ? 0.0 : r / (nt * static_cast<double>(total)); };
  for (std::size_t b = 0; b < nb; ++b) {
    res.overall.push_back(ratio(recalled[b][0], res.objects));
    res.small.push_back(ratio(recalled[b][1], res.n_small));
    res.medium.push_back(ratio(recalled[b][2], res.n_medium));
    res.large.push_back(ratio(recalled[b][3], res.n_large));
  }
  return res;
}

/// Pixels with a 4-neighbor carrying a different label.
inline std::vector<std::uint8_t> boundary_pixels(std::span<const std::uint32_t> labels, int width, int height) {
  std::vector<std::uint8_t> b(labels.size(), 0);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * width + x;
      const auto l = labels[i];
      if ((x > 0 && labels[i - 1] != l) || (x + 1 < width && labels[i + 1] != l) ||
          (y > 0 && labels[i - width] != l) || (y + 1 < height && labels[i + width] != l))
        b[i] = 1;
    }
  return b;
}

/// Fraction of ground-truth boundary pixels within Chebyshev distance
/// `tolerance` of a predicted boundary pixel. The image frame counts as a
/// predicted boundary. No ground-truth boundary gives 1.
inline double boundary_recall(std::span<const std::uint32_t> predicted, std::span<const std::uint32_t> truth, int width,
                              int height, int tolerance) {
  require(predicted.size() == truth.size() && truth.size() == static_cast<std::size_t>(width) * height,
          Errc::dimension_mismatch, "boundary_recall: dimension mismatch");
  const auto pb = boundary_pixels(predicted, width, height);
  const auto gb = boundary_pixels(truth, width, height);
  // summed-area table of predicted boundary pixels
  const int sw = width + 1;
  std::vector<std::uint32_t> sat(static_cast<std::size_t>(sw) * (height + 1), 0);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      sat[static_cast<std::size_t>(y + 1) * sw + x + 1] = pb[static_cast<std::size_t>(y) * width + x] +
                                                          sat[static_cast<std::size_t>(y) * sw + x + 1] +
                                                          sat[static_cast<std::size_t>(y + 1) * sw + x] -
                                                          sat[static_cast<std::size_t>(y) * sw + x];
  std::size_t total = 0, hit = 0;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      if (!gb[static_cast<std::size_t>(y) * width + x]) continue;
      ++total;
      if (std::min({x, y, width - 1 - x, height - 1 - y}) <= tolerance) {
        ++hit;
        continue;
      }
      const int x0 = x - tolerance, y0 = y - tolerance, x1 = x + tolerance + 1, y1 = y + tolerance + 1;
      const auto s = sat[static_cast<std::size_t>(y1) * sw + x1] - sat[static_cast<std::size_t>(y0) * sw + x1] -
                     sat[static_cast<std::size_t>(y1) * sw + x0] + sat[static_cast<std::size_t>(y0) * sw + x0];
      if (s > 0) ++hit;
    }
  return total == 0 ? 1.0 : static_cast<double>(hit) / static_cast<double>(total);
}

inline double boundary_recall(const LabelMap& predicted, std::span<const std::uint32_t> truth, int tolerance) {
  return boundary_recall(predicted.labels, truth, predicted.width, predicted.height, tolerance);
}

namespace detail {

// |s ∩ G| for every (superpixel, truth segment) pair that co-occurs.
struct Contingency {
  std::unordered_map<std::uint64_t, std::uint64_t> joint;
  std::unordered_map<std::uint32_t, std::uint64_t> superpixel_area;
  std::unordered_map<std::uint32_t, std::uint64_t> segment_area;
};

inline Contingency contingency(std::span<const std::uint32_t> sp, std::span<const std::uint32_t> truth) {
  require(sp.size() == truth.size(), Errc::dimension_mismatch, "segmentation metrics: dimension mismatch");
  Contingency c;
  for (std::size_t i = 0; i < sp.size(); ++i) {
    ++c.joint[(static_cast<std::uint64_t>(sp[i]) << 32) | truth[i]];
    ++c.superpixel_area[sp[i]];
    ++c.segment_area[truth[i]];
  }
  return c;
}

}  // namespace detail

/// (1/N) * sum over truth segments G and superpixels s meeting G of
/// min(|s ∩ G|, |s \ G|).
inline double undersegmentation_error(std::span<const std::uint32_t> superpixels, std::span<const std::uint32_t> truth) {
  if (superpixels.empty()) return 0.0;
  const auto c = detail::contingency(superpixels, truth);
  std::uint64_t leak = 0;
  for (const auto& [key, inside] : c.joint) {
    const auto area = c.superpixel_area.at(static_cast<std::uint32_t>(key >> 32));
    leak += std::min(inside, area - inside);
  }
  return static_cast<double>(leak) / static_cast<double>(superpixels.size());
}

/// Mean over truth segments of (n - 1) / n, n = number of superpixels with
/// |s ∩ G| > fraction * |s| (at least 1).
inline double oversegmentation_error(std::span<const std::uint32_t> superpixels, std::span<const std::uint32_t> truth,
                                     double fraction) {
  if (superpixels.empty()) return 0.0;
  const auto c = detail::contingency(superpixels, truth);
  std::unordered_map<std::uint32_t, std::uint64_t> fragments;
  for (const auto& [key, inside] : c.joint) {
    const auto area = c.superpixel_area.at(static_cast<std::uint32_t>(key >> 32));
    if (static_cast<double>(inside) > fraction * static_cast<double>(area)) ++fragments[static_cast<std::uint32_t>(key)];
  }
  double sum = 0.0;
  for (const auto& [segment, area] : c.segment_area) {
    const double n = static_cast<double>(std::max<std::uint64_t>(1, fragments[segment]));
    sum += (n - 1.0) / n;
  }
  return sum / static_cast<double>(c.segment_area.size());
}

enum class AiouMode { greedy, exhaustive };

/// Mean over objects of the IoU reached by the best superpixel set.
inline double aiou(const LabelMap& lm, std::span<const GtObject> gts, AiouMode mode = AiouMode::greedy,
                   int max_superpixels = 15) {
  if (gts.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& g : gts)
    sum += mode == AiouMode::greedy ? greedy_gt_set(lm, g).iou : exhaustive_gt_set(lm, g, max_superpixels).iou;
  return sum / static_cast<double>(gts.size());
}

/// Mean over all objects of the best IoU reached by any proposal of its image.
inline double avg_iou(std::span<const std::vector<ScoredMask>> proposals, std::span<const std::vector<GtObject>> gts) {
  require(proposals.size() == gts.size(), Errc::dimension_mismatch, "avg_iou: one proposal list per image");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t img = 0; img < gts.size(); ++img) {
    std::vector<detail::MaskGeometry> pg;
    for (const auto& p : proposals[img]) pg.push_back(detail::geometry(p.mask));
    for (const auto& g : gts[img]) {
      const auto gg = detail::geometry(g.mask);
      double best = 0.0;
      for (std::size_t p = 0; p < proposals[img].size(); ++p)
        best = std::max(best, detail::fast_iou(proposals[img][p].mask, pg[p], g.mask, gg));
      sum += best;
      ++n;
    }
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

struct MetricsReport {
  ArResult ar;
  bool has_segmentation = false;
  double br = 0.0;
  double ue = 0.0;
  double oe = 0.0;
  double aiou = 0.0;
  double avg_iou = 0.0;
  double efficiency = 0.0;
  std::size_t objects = 0;
  std::size_t images = 0;
};

struct EvalImage {
  std::vector<ScoredMask> proposals;
  std::vector<GtObject> objects;
  std::vector<const LabelMap*> segmentations;  // one per pyramid level, may be empty
};

/// Dataset report. Segmentation measures (BR, UE, OE, AIoU) are averaged
/// over every (image, segmentation) pair.
inline MetricsReport evaluate(std::span<const EvalImage> images, const MetricsConfig& cfg,
                              AiouMode mode = AiouMode::greedy) {
  cfg.validate();
  MetricsReport rep;
  rep.images = images.size();
  std::vector<std::vector<ScoredMask>> props;
  std::vector<std::vector<GtObject>> gts;
  props.reserve(images.size());
  gts.reserve(images.size());
  double br = 0.0, ue = 0.0, oe = 0.0, ai = 0.0;
  std::size_t segs = 0, ai_objects = 0;
  for (const auto& im : images) {
    props.push_back(im.proposals);
    gts.push_back(im.objects);
    rep.objects += im.objects.size();
    for (const LabelMap* lm : im.segmentations) {
      const auto truth = combine_objects(im.objects, lm->width, lm->height);
      br += boundary_recall(*lm, truth, cfg.boundary_tolerance);
      ue += undersegmentation_error(lm->labels, truth);
      oe += oversegmentation_error(lm->labels, truth, cfg.oe_overlap_fraction);
      for (const auto& g : im.objects)
        ai += mode == AiouMode::greedy ? greedy_gt_set(*lm, g).iou : exhaustive_gt_set(*lm, g).iou;
      ai_objects += im.objects.size();
      ++segs;
    }
  }
  rep.ar = average_recall(props, gts, cfg);
  rep.avg_iou = avg_iou(props, gts);
  if (segs > 0) {
    rep.has_segmentation = true;
    rep.br = br / static_cast<double>(segs);
    rep.ue = ue / static_cast<double>(segs);
    rep.oe = oe / static_cast<double>(segs);
    rep.aiou = ai_objects == 0 ? 0.0 : ai / static_cast<double>(ai_objects);
    rep.efficiency = rep.aiou > 0.0 ? rep.avg_iou / rep.aiou : 0.0;
  }
  return rep;
}

inline nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json ar = nlohmann::json::object();
  for (std::size_t b = 0; b < r.ar.budgets.size(); ++b) {
    const std::string key = "AR@" + std::to_string(r.ar.budgets[b]);
    ar[key] = {{"all", r.ar.overall[b]}, {"small", r.ar.small[b]}, {"medium", r.ar.medium[b]}, {"large", r.ar.large[b]}};
  }
  nlohmann::json j{{"ar", ar},
                   {"avg_iou", r.avg_iou},
                   {"objects", r.objects},
                   {"images", r.images},
                   {"objects_by_size", {{"small", r.ar.n_small}, {"medium", r.ar.n_medium}, {"large", r.ar.n_large}}}};
  if (r.has_segmentation) {
    j["br"] = r.br;
    j["ue"] = r.ue;
    j["oe"] = r.oe;
    j["aiou"] = r.aiou;
    j["efficiency"] = r.efficiency;
  }
  return j;
}

/// Aligned-column table, one row per named report.
inline std::string to_text(std::span<const std::pair<std::string, MetricsReport>> rows) {
  std::ostringstream os;
  os << std::left << std::setw(22) << "run";
  if (!rows.empty())
    for (int n : rows.front().second.ar.budgets) os << std::right << std::setw(9) << ("AR@" + std::to_string(n));
  os << std::setw(9) << "AVGIoU" << std::setw(9) << "AIoU" << std::setw(9) << "eff" << std::setw(9) << "BR"
     << std::setw(9) << "UE" << std::setw(9) << "OE" << '\n';
  os << std::fixed << std::setprecision(4);
  for (const auto& [name, r] : rows) {
    os << std::left << std::setw(22) << name << std::right;
    for (double v : r.ar.overall) os << std::setw(9) << v;
    os << std::setw(9) << r.avg_iou;
    if (r.has_segmentation)
      os << std::setw(9) << r.aiou << std::setw(9) << r.efficiency << std::setw(9) << r.br << std::setw(9) << r.ue
         << std::setw(9) << r.oe;
    else
      for (int i = 0; i < 5; ++i) os << std::setw(9) << "-";
    os << '\n';
  }
  return os.str();
}

}  // namespace spxr
