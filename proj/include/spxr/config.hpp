#pragma once

// Run configuration (JSON) and the dataset / ground-truth / proposal
// manifests exchanged between commands.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "spxr/error.hpp"
#include "spxr/fh.hpp"
#include "spxr/groundtruth.hpp"
#include "spxr/io.hpp"
#include "spxr/metrics.hpp"
#include "spxr/mlp.hpp"
#include "spxr/postprocess.hpp"
#include "spxr/refine.hpp"
#include "spxr/synth.hpp"

namespace spxr {

namespace fs = std::filesystem;
using json = nlohmann::json;

struct LevelConfig {
  int level = 0;
  int target_count = 500;
  std::string features;  // optional feature map for single-image segmentation
  FhParams fh;
  std::optional<double> achieved_count;
  std::string warning;
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::vector<LevelConfig> levels;
  CalibrationOptions calibration;
  PostprocessConfig postprocess;
  MetricsConfig metrics;
  TrainConfig train;
  double negative_ratio = 3.0;  // negatives kept per positive
  double threshold = 0.5;       // classifier decision
  SynthConfig synth;
};

/// Rounded geometric interpolation from `finest` down to `coarsest`.
inline std::vector<int> geometric_targets(int finest, int coarsest, int levels) {
  require(levels >= 1 && finest >= 1 && coarsest >= 1, Errc::invalid_argument, "geometric_targets: invalid range");
  std::vector<int> t;
  for (int i = 0; i < levels; ++i) {
    const double f = levels == 1 ? 0.0 : static_cast<double>(i) / (levels - 1);
    t.push_back(static_cast<int>(std::lround(finest * std::pow(static_cast<double>(coarsest) / finest, f))));
  }
  return t;
}

/// Four levels from 8000 down to 500 superpixels. min_size shrinks with the
/// target (20 at 500, 5 at 8000): a larger floor caps the count below the
/// finest targets on typical image sizes, whatever k is.
inline RunConfig default_run_config() {
  RunConfig cfg;
  const auto targets = geometric_targets(8000, 500, 4);
  const auto floors = geometric_targets(5, 20, 4);
  for (int i = 0; i < 4; ++i) {
    LevelConfig lc;
    lc.level = i;
    lc.target_count = targets[static_cast<std::size_t>(i)];
    lc.fh.min_size = floors[static_cast<std::size_t>(i)];
    cfg.levels.push_back(lc);
  }
  return cfg;
}

namespace detail {

template <class T>
void read_field(const json& j, const char* key, T& out, const std::string& ctx) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(Errc::config_error, ctx + "." + key + ": " + e.what());
  }
}

inline void require_object(const json& j, const std::string& ctx) {
  require(j.is_object(), Errc::config_error, ctx + ": expected an object");
}

}  // namespace detail

inline json to_json(const FhParams& p) {
  return {{"k", p.k}, {"alpha", p.alpha}, {"min_size", p.min_size}, {"connectivity", p.connectivity}, {"sigma", p.sigma}};
}

inline FhParams fh_from_json(const json& j, const std::string& ctx, FhParams p = {}) {
  detail::require_object(j, ctx);
  detail::read_field(j, "k", p.k, ctx);
  detail::read_field(j, "alpha", p.alpha, ctx);
  detail::read_field(j, "min_size", p.min_size, ctx);
  detail::read_field(j, "connectivity", p.connectivity, ctx);
  detail::read_field(j, "sigma", p.sigma, ctx);
  try {
    p.validate();
  } catch (const Error& e) {
    fail(Errc::config_error, ctx + ": " + e.what());
  }
  return p;
}

inline json to_json(const RunConfig& c) {
  json levels = json::array();
  for (const auto& l : c.levels) {
    json lj{{"level", l.level}, {"target_count", l.target_count}, {"fh", to_json(l.fh)}};
    if (!l.features.empty()) lj["features"] = l.features;
    if (l.achieved_count) lj["achieved_count"] = *l.achieved_count;
    if (!l.warning.empty()) lj["warning"] = l.warning;
    levels.push_back(lj);
  }
  const auto& s = c.synth;
  return {
      {"seed", c.seed},
      {"levels", levels},
      {"calibration",
       {{"k_lo", c.calibration.k_lo},
        {"k_hi", c.calibration.k_hi},
        {"tolerance", c.calibration.tolerance},
        {"max_iterations", c.calibration.max_iterations}}},
      {"postprocess",
       {{"spatial_sigma", c.postprocess.spatial_sigma},
        {"color_sigma", c.postprocess.color_sigma},
        {"filter_threshold", c.postprocess.filter_threshold},
        {"radius", c.postprocess.radius},
        {"nms_iou", c.postprocess.nms_iou}}},
      {"metrics",
       {{"ar_iou_thresholds", c.metrics.ar_iou_thresholds},
        {"budgets", c.metrics.budgets},
        {"boundary_tolerance", c.metrics.boundary_tolerance},
        {"oe_overlap_fraction", c.metrics.oe_overlap_fraction}}},
      {"train",
       {{"learning_rate", c.train.learning_rate},
        {"epochs", c.train.epochs},
        {"batch_size", c.train.batch_size},
        {"momentum", c.train.momentum},
        {"hidden", c.train.hidden},
        {"negative_ratio", c.negative_ratio}}},
      {"threshold", c.threshold},
      {"synth",
       {{"width", s.width},
        {"height", s.height},
        {"min_objects", s.min_objects},
        {"max_objects", s.max_objects},
        {"min_visible_area", s.min_visible_area},
        {"min_visible_fraction", s.min_visible_fraction},
        {"feature_dim", s.feature_dim},
        {"feature_noise", s.feature_noise},
        {"texture_amplitude", s.texture_amplitude},
        {"pixel_noise", s.pixel_noise},
        {"pad_min", s.pad_min},
        {"pad_max", s.pad_max},
        {"blur_sigma", s.blur_sigma},
        {"max_duplicates", s.max_duplicates},
        {"max_distractors", s.max_distractors},
        {"level_count", s.level_count},
        {"base_level_size", s.base_level_size}}},
  };
}

inline RunConfig run_config_from_json(const json& j) {
  detail::require_object(j, "config");
  RunConfig c = default_run_config();
  detail::read_field(j, "seed", c.seed, "config");
  detail::read_field(j, "threshold", c.threshold, "config");
  if (j.contains("levels")) {
    const json& lv = j.at("levels");
    require(lv.is_array() && !lv.empty(), Errc::config_error, "config.levels: expected a non-empty array");
    c.levels.clear();
    for (std::size_t i = 0; i < lv.size(); ++i) {
      const std::string ctx = "config.levels[" + std::to_string(i) + "]";
      detail::require_object(lv[i], ctx);
      LevelConfig l;
      l.level = static_cast<int>(i);
      detail::read_field(lv[i], "level", l.level, ctx);
      detail::read_field(lv[i], "target_count", l.target_count, ctx);
      detail::read_field(lv[i], "features", l.features, ctx);
      detail::read_field(lv[i], "warning", l.warning, ctx);
      if (lv[i].contains("achieved_count")) {
        double a = 0.0;
        detail::read_field(lv[i], "achieved_count", a, ctx);
        l.achieved_count = a;
      }
      if (lv[i].contains("fh")) l.fh = fh_from_json(lv[i].at("fh"), ctx + ".fh");
      require(l.target_count >= 1, Errc::config_error, ctx + ".target_count: must be >= 1");
      for (const auto& prev : c.levels)
        require(prev.level != l.level, Errc::config_error, ctx + ".level: duplicate level " + std::to_string(l.level));
      c.levels.push_back(l);
    }
  }
  if (j.contains("calibration")) {
    const json& cj = j.at("calibration");
    detail::require_object(cj, "config.calibration");
    detail::read_field(cj, "k_lo", c.calibration.k_lo, "config.calibration");
    detail::read_field(cj, "k_hi", c.calibration.k_hi, "config.calibration");
    detail::read_field(cj, "tolerance", c.calibration.tolerance, "config.calibration");
    detail::read_field(cj, "max_iterations", c.calibration.max_iterations, "config.calibration");
    require(c.calibration.k_lo > 0.0 && c.calibration.k_hi > c.calibration.k_lo, Errc::config_error,
            "config.calibration: need 0 < k_lo < k_hi");
  }
  if (j.contains("postprocess")) {
    const json& pj = j.at("postprocess");
    const std::string ctx = "config.postprocess";
    detail::require_object(pj, ctx);
    detail::read_field(pj, "spatial_sigma", c.postprocess.spatial_sigma, ctx);
    detail::read_field(pj, "color_sigma", c.postprocess.color_sigma, ctx);
    detail::read_field(pj, "filter_threshold", c.postprocess.filter_threshold, ctx);
    detail::read_field(pj, "radius", c.postprocess.radius, ctx);
    detail::read_field(pj, "nms_iou", c.postprocess.nms_iou, ctx);
    try {
      c.postprocess.validate();
    } catch (const Error& e) {
      fail(Errc::config_error, ctx + ": " + e.what());
    }
  }
  if (j.contains("metrics")) {
    const json& mj = j.at("metrics");
    const std::string ctx = "config.metrics";
    detail::require_object(mj, ctx);
    detail::read_field(mj, "ar_iou_thresholds", c.metrics.ar_iou_thresholds, ctx);
    detail::read_field(mj, "budgets", c.metrics.budgets, ctx);
    detail::read_field(mj, "boundary_tolerance", c.metrics.boundary_tolerance, ctx);
    detail::read_field(mj, "oe_overlap_fraction", c.metrics.oe_overlap_fraction, ctx);
    try {
      c.metrics.validate();
    } catch (const Error& e) {
      fail(Errc::config_error, ctx + ": " + e.what());
    }
  }
  if (j.contains("train")) {
    const json& tj = j.at("train");
    const std::string ctx = "config.train";
    detail::require_object(tj, ctx);
    detail::read_field(tj, "learning_rate", c.train.learning_rate, ctx);
    detail::read_field(tj, "epochs", c.train.epochs, ctx);
    detail::read_field(tj, "batch_size", c.train.batch_size, ctx);
    detail::read_field(tj, "momentum", c.train.momentum, ctx);
    detail::read_field(tj, "hidden", c.train.hidden, ctx);
    detail::read_field(tj, "negative_ratio", c.negative_ratio, ctx);
    require(c.train.learning_rate > 0.0 && c.train.epochs >= 0 && c.train.batch_size >= 1, Errc::config_error,
            ctx + ": learning_rate > 0, epochs >= 0 and batch_size >= 1 required");
    for (int hsz : c.train.hidden) require(hsz >= 1, Errc::config_error, ctx + ".hidden: sizes must be positive");
    require(c.negative_ratio >= 0.0, Errc::config_error, ctx + ".negative_ratio: must be >= 0");
  }
  if (j.contains("synth")) {
    const json& sj = j.at("synth");
    const std::string ctx = "config.synth";
    detail::require_object(sj, ctx);
    auto& s = c.synth;
    detail::read_field(sj, "width", s.width, ctx);
    detail::read_field(sj, "height", s.height, ctx);
    detail::read_field(sj, "min_objects", s.min_objects, ctx);
    detail::read_field(sj, "max_objects", s.max_objects, ctx);
    detail::read_field(sj, "min_visible_area", s.min_visible_area, ctx);
    detail::read_field(sj, "min_visible_fraction", s.min_visible_fraction, ctx);
    detail::read_field(sj, "feature_dim", s.feature_dim, ctx);
    detail::read_field(sj, "feature_noise", s.feature_noise, ctx);
    detail::read_field(sj, "texture_amplitude", s.texture_amplitude, ctx);
    detail::read_field(sj, "pixel_noise", s.pixel_noise, ctx);
    detail::read_field(sj, "pad_min", s.pad_min, ctx);
    detail::read_field(sj, "pad_max", s.pad_max, ctx);
    detail::read_field(sj, "blur_sigma", s.blur_sigma, ctx);
    detail::read_field(sj, "max_duplicates", s.max_duplicates, ctx);
    detail::read_field(sj, "max_distractors", s.max_distractors, ctx);
    detail::read_field(sj, "level_count", s.level_count, ctx);
    detail::read_field(sj, "base_level_size", s.base_level_size, ctx);
    try {
      s.validate();
    } catch (const Error& e) {
      fail(Errc::config_error, ctx + ": " + e.what());
    }
  }
  require(c.threshold > 0.0 && c.threshold < 1.0, Errc::config_error, "config.threshold: must lie in (0,1)");
  return c;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), Errc::io_error, "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(Errc::config_error, path + ": " + e.what());
  }
}

inline void write_json_file(const json& j, const std::string& path) {
  if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream out(path, std::ios::trunc);
  require(static_cast<bool>(out), Errc::io_error, "cannot write " + path);
  out << j.dump(2) << '\n';
  require(static_cast<bool>(out), Errc::io_error, "write failed: " + path);
}

inline RunConfig load_run_config(const std::string& path) {
  try {
    return run_config_from_json(read_json_file(path));
  } catch (const Error& e) {
    if (e.code() == Errc::config_error) fail(Errc::config_error, path + ": " + e.what());
    throw;
  }
}

inline const LevelConfig& level_config(const RunConfig& c, int level) {
  for (const auto& l : c.levels)
    if (l.level == level) return l;
  fail(Errc::level_mismatch, "no level " + std::to_string(level) + " in the run configuration");
}

// ---------------------------------------------------------------------------
// manifests; relative paths resolve against the manifest's directory

inline std::string resolve(const fs::path& base_file, const std::string& p) {
  const fs::path q(p);
  return q.is_absolute() ? q.string() : (base_file.parent_path() / q).string();
}

struct DatasetEntry {
  std::string name;
  std::string image;
  std::string features;  // may be empty
  std::string gt;
  std::string proposals;
  std::string affinity;  // may be empty
};

struct Dataset {
  std::string path;  // dataset.json
  std::vector<DatasetEntry> entries;
};

inline Dataset load_dataset(const std::string& path) {
  const json j = read_json_file(path);
  require(j.is_object() && j.contains("images") && j.at("images").is_array(), Errc::config_error,
          path + ": field 'images' must be an array");
  Dataset d;
  d.path = path;
  const auto& arr = j.at("images");
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string ctx = path + ": images[" + std::to_string(i) + "]";
    detail::require_object(arr[i], ctx);
    DatasetEntry e;
    detail::read_field(arr[i], "name", e.name, ctx);
    detail::read_field(arr[i], "image", e.image, ctx);
    detail::read_field(arr[i], "features", e.features, ctx);
    detail::read_field(arr[i], "gt", e.gt, ctx);
    detail::read_field(arr[i], "proposals", e.proposals, ctx);
    detail::read_field(arr[i], "affinity", e.affinity, ctx);
    require(!e.image.empty(), Errc::config_error, ctx + ".image: missing");
    if (e.name.empty()) e.name = fs::path(e.image).stem().string();
    e.image = resolve(path, e.image);
    if (!e.features.empty()) e.features = resolve(path, e.features);
    if (!e.gt.empty()) e.gt = resolve(path, e.gt);
    if (!e.proposals.empty()) e.proposals = resolve(path, e.proposals);
    if (!e.affinity.empty()) e.affinity = resolve(path, e.affinity);
    d.entries.push_back(std::move(e));
  }
  return d;
}

/// GT manifest {image, objects: [{id, mask_png}]}; masks written next to it.
inline void write_gt_manifest(const std::string& path, const std::string& image, std::span<const GtObject> objects) {
  const fs::path base(path);
  const std::string stem = base.stem().string();
  json objs = json::array();
  for (const auto& o : objects) {
    const std::string mask_name = stem + "_obj" + std::to_string(o.id) + ".png";
    save_mask_png(o.mask, (base.parent_path() / mask_name).string());
    json oj{{"id", o.id}, {"mask_png", mask_name}};
    if (!o.category.empty()) oj["category"] = o.category;
    objs.push_back(oj);
  }
  write_json_file({{"image", image}, {"objects", objs}}, path);
}

struct GtManifest {
  std::string image;
  std::vector<GtObject> objects;
};

inline GtManifest load_gt_manifest(const std::string& path, int width = -1, int height = -1) {
  const json j = read_json_file(path);
  require(j.is_object() && j.contains("objects") && j.at("objects").is_array(), Errc::config_error,
          path + ": field 'objects' must be an array");
  GtManifest m;
  detail::read_field(j, "image", m.image, path);
  const auto& arr = j.at("objects");
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string ctx = path + ": objects[" + std::to_string(i) + "]";
    detail::require_object(arr[i], ctx);
    GtObject o;
    std::string mask_png;
    detail::read_field(arr[i], "id", o.id, ctx);
    detail::read_field(arr[i], "mask_png", mask_png, ctx);
    detail::read_field(arr[i], "category", o.category, ctx);
    require(!mask_png.empty(), Errc::config_error, ctx + ".mask_png: missing");
    o.mask = load_mask(resolve(path, mask_png));
    if (width >= 0)
      require(o.mask.width == width && o.mask.height == height, Errc::dimension_mismatch,
              ctx + ".mask_png: mask is " + std::to_string(o.mask.width) + "x" + std::to_string(o.mask.height) +
                  ", image is " + std::to_string(width) + "x" + std::to_string(height));
    for (const auto& prev : m.objects)
      require(prev.id != o.id, Errc::config_error, ctx + ".id: duplicate id " + std::to_string(o.id));
    m.objects.push_back(std::move(o));
  }
  return m;
}

/// Proposals manifest {image, level_count, proposals: [{rect, level, score,
/// window_file, gt_id?}]}; each window is a 40x40x1 FMAP next to it.
inline void write_proposals_manifest(const std::string& path, const std::string& image, int level_count,
                                     std::span<const CoarseProposal> proposals, std::span<const int> gt_ids = {}) {
  const fs::path base(path);
  const std::string stem = base.stem().string();
  json arr = json::array();
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    const auto& p = proposals[i];
    char idx[24];
    std::snprintf(idx, sizeof idx, "%04zu", i);
    const std::string win = stem + "_w" + idx + ".fmap";
    FeatureMap fm(kWindowSize, kWindowSize, 1);
    fm.data = p.window;
    write_feature_map(fm, (base.parent_path() / win).string());
    json pj{{"rect", {{"x", p.rect.x}, {"y", p.rect.y}, {"w", p.rect.w}, {"h", p.rect.h}}},
            {"level", p.level},
            {"score", p.score},
            {"window_file", win}};
    if (i < gt_ids.size() && gt_ids[i] > 0) pj["gt_id"] = gt_ids[i];
    arr.push_back(pj);
  }
  write_json_file({{"image", image}, {"level_count", level_count}, {"proposals", arr}}, path);
}

struct ProposalsManifest {
  std::string image;
  int level_count = 0;
  std::vector<CoarseProposal> proposals;
  std::vector<int> gt_ids;  // 0 when absent
};

inline ProposalsManifest load_proposals_manifest(const std::string& path) {
  const json j = read_json_file(path);
  require(j.is_object() && j.contains("proposals") && j.at("proposals").is_array(), Errc::config_error,
          path + ": field 'proposals' must be an array");
  ProposalsManifest m;
  detail::read_field(j, "image", m.image, path);
  detail::read_field(j, "level_count", m.level_count, path);
  require(m.level_count >= 1 || j.at("proposals").empty(), Errc::config_error, path + ": field 'level_count' must be >= 1");
  const auto& arr = j.at("proposals");
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string ctx = path + ": proposals[" + std::to_string(i) + "]";
    detail::require_object(arr[i], ctx);
    CoarseProposal p;
    std::string win;
    int gt = 0;
    require(arr[i].contains("rect") && arr[i].at("rect").is_object(), Errc::config_error, ctx + ".rect: missing");
    const auto& r = arr[i].at("rect");
    detail::read_field(r, "x", p.rect.x, ctx + ".rect");
    detail::read_field(r, "y", p.rect.y, ctx + ".rect");
    detail::read_field(r, "w", p.rect.w, ctx + ".rect");
    detail::read_field(r, "h", p.rect.h, ctx + ".rect");
    detail::read_field(arr[i], "level", p.level, ctx);
    detail::read_field(arr[i], "score", p.score, ctx);
    detail::read_field(arr[i], "window_file", win, ctx);
    detail::read_field(arr[i], "gt_id", gt, ctx);
    require(p.level >= 0 && p.level < m.level_count, Errc::level_mismatch,
            ctx + ".level: " + std::to_string(p.level) + " outside [0, level_count)");
    require(!p.rect.empty(), Errc::config_error, ctx + ".rect: empty rectangle");
    require(!win.empty(), Errc::config_error, ctx + ".window_file: missing");
    const FeatureMap fm = read_feature_map(resolve(path, win));
    require(fm.width == kWindowSize && fm.height == kWindowSize && fm.dim == 1, Errc::dimension_mismatch,
            ctx + ".window_file: window must be 40x40x1");
    p.window = fm.data;
    m.proposals.push_back(std::move(p));
    m.gt_ids.push_back(gt);
  }
  return m;
}

}  // namespace spxr
