#pragma once

// Commands behind the CLI. Each one is a plain function of (config, inputs)
// so tests can drive the same code path the executable uses.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "spxr/config.hpp"
#include "spxr/fh.hpp"
#include "spxr/groundtruth.hpp"
#include "spxr/io.hpp"
#include "spxr/metrics.hpp"
#include "spxr/mlp.hpp"
#include "spxr/parallel.hpp"
#include "spxr/postprocess.hpp"
#include "spxr/refine.hpp"
#include "spxr/synth.hpp"

namespace spxr {

// ---------------------------------------------------------------------------
// segmentation per level

/// Segments every configured level. A level with alpha > 0 needs `features`.
inline std::vector<LabelMap> segment_levels(const RunConfig& cfg, const RgbImage& img, const FeatureMap* features,
                                            const std::string& context = "") {
  std::vector<LabelMap> out;
  for (const auto& l : cfg.levels) {
    require(l.fh.alpha == 0.0 || features != nullptr, Errc::invalid_argument,
            (context.empty() ? "" : context + ": ") + "level " + std::to_string(l.level) +
                " has alpha > 0 but no feature map");
    if (features)
      require(features->width == img.width && features->height == img.height, Errc::dimension_mismatch,
              (context.empty() ? "" : context + ": ") + "feature map dimensions differ from the image");
    out.push_back(segment(img, l.fh.alpha > 0.0 ? features : nullptr, l.fh));
  }
  return out;
}

/// Level bundles for refinement; pooled features come from `features` when
/// present (dimension 0 otherwise).
inline std::vector<LevelBundle> build_bundles(const RunConfig& cfg, const RgbImage& img, const FeatureMap* features,
                                              const std::string& context = "") {
  auto maps = segment_levels(cfg, img, features, context);
  const FeatureMap none(img.width, img.height, 0);
  std::vector<LevelBundle> bundles;
  for (std::size_t i = 0; i < maps.size(); ++i)
    bundles.push_back(make_level_bundle(cfg.levels[i].level, std::move(maps[i]), features ? *features : none, img));
  return bundles;
}

// ---------------------------------------------------------------------------
// scenes

struct Scene {
  std::string name;
  RgbImage image;
  std::optional<FeatureMap> features;
  std::vector<GtObject> objects;
  std::vector<CoarseProposal> proposals;
  std::vector<int> proposal_gt;  // object id or 0
};

inline Scene load_scene(const DatasetEntry& e) {
  Scene s;
  s.name = e.name;
  s.image = load_image(e.image);
  if (!e.features.empty()) {
    s.features = read_feature_map(e.features);
    require(s.features->width == s.image.width && s.features->height == s.image.height, Errc::dimension_mismatch,
            e.features + ": feature map is " + std::to_string(s.features->width) + "x" +
                std::to_string(s.features->height) + ", image is " + std::to_string(s.image.width) + "x" +
                std::to_string(s.image.height));
  }
  if (!e.gt.empty()) s.objects = load_gt_manifest(e.gt, s.image.width, s.image.height).objects;
  if (!e.proposals.empty()) {
    auto pm = load_proposals_manifest(e.proposals);
    for (std::size_t i = 0; i < pm.proposals.size(); ++i) {
      try {
        pm.proposals[i].validate(s.image.width, s.image.height);
      } catch (const Error& err) {
        fail(err.code(), e.proposals + ": proposals[" + std::to_string(i) + "]: " + err.what());
      }
    }
    s.proposals = std::move(pm.proposals);
    s.proposal_gt = std::move(pm.gt_ids);
  }
  return s;
}

inline Scene scene_from_synth(SynthScene&& ss, std::string name) {
  Scene s;
  s.name = std::move(name);
  s.image = std::move(ss.image);
  s.features = std::move(ss.features);
  s.objects = std::move(ss.objects);
  s.proposals = std::move(ss.proposals);
  s.proposal_gt = std::move(ss.proposal_gt);
  return s;
}

/// Object a proposal belongs to: its gt_id when given, otherwise the object
/// its coarse mask overlaps best with IoU >= 0.5; -1 when none.
inline int proposal_object(const Scene& s, std::size_t p) {
  if (p < s.proposal_gt.size() && s.proposal_gt[p] > 0) {
    for (std::size_t o = 0; o < s.objects.size(); ++o)
      if (s.objects[o].id == s.proposal_gt[p]) return static_cast<int>(o);
    fail(Errc::config_error, s.name + ": proposals[" + std::to_string(p) + "].gt_id: no object with id " +
                                 std::to_string(s.proposal_gt[p]));
  }
  const BinaryMask cm = coarse_mask(s.proposals[p], s.image.width, s.image.height);
  int best = -1;
  double best_iou = 0.5;
  for (std::size_t o = 0; o < s.objects.size(); ++o) {
    const double v = mask_iou(cm, s.objects[o].mask);
    if (v >= best_iou) {
      best_iou = v;
      best = static_cast<int>(o);
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// training samples

/// Samples from one scene: for each proposal, every window superpixel with
/// label = member of the greedy ground-truth set of the proposal's object.
inline std::vector<SpxSample> scene_samples(const Scene& s, std::span<const LevelBundle> bundles) {
  std::vector<SpxSample> out;
  std::map<std::pair<int, int>, std::set<std::uint32_t>> positives;  // (level, object) -> superpixels
  for (std::size_t p = 0; p < s.proposals.size(); ++p) {
    const auto& cp = s.proposals[p];
    const LevelBundle* b = find_bundle(bundles, cp.level);
    require(b != nullptr, Errc::level_mismatch,
            s.name + ": proposals[" + std::to_string(p) + "].level: " + std::to_string(cp.level) + " not configured");
    const int obj = proposal_object(s, p);
    const std::set<std::uint32_t>* pos = nullptr;
    if (obj >= 0) {
      auto key = std::make_pair(cp.level, obj);
      auto it = positives.find(key);
      if (it == positives.end()) {
        const auto sel = greedy_gt_set(b->labels, s.objects[static_cast<std::size_t>(obj)]);
        it = positives.emplace(key, std::set<std::uint32_t>(sel.superpixels.begin(), sel.superpixels.end())).first;
      }
      pos = &it->second;
    }
    auto ri = refinement_inputs(cp, *b);
    for (std::size_t i = 0; i < ri.ids.size(); ++i)
      out.push_back(SpxSample{std::move(ri.inputs[i]), pos != nullptr && pos->count(ri.ids[i]) > 0});
  }
  return out;
}

/// Keeps every positive and a seeded random subset of negatives of size
/// ratio * positives (all of them when fewer exist). Order is preserved.
inline std::vector<SpxSample> balance_samples(std::vector<SpxSample> samples, double ratio, std::uint64_t seed) {
  std::vector<std::size_t> neg;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) samples[i].label ? ++pos : (neg.push_back(i), 0);
  const auto keep = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(pos)));
  if (keep >= neg.size()) return samples;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < keep; ++i) std::swap(neg[i], neg[i + rng() % (neg.size() - i)]);
  std::vector<char> drop(samples.size(), 0);
  for (std::size_t i = keep; i < neg.size(); ++i) drop[neg[i]] = 1;
  std::vector<SpxSample> out;
  out.reserve(pos + keep);
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (!drop[i]) out.push_back(std::move(samples[i]));
  return out;
}

// ---------------------------------------------------------------------------
// refinement pipeline with every post-processing stage kept

struct StagedProposals {
  std::vector<ScoredMask> coarse;    // window thresholded at 0.5
  std::vector<ScoredMask> refined;   // classifier output
  std::vector<ScoredMask> filtered;  // + bilateral filter
  std::vector<ScoredMask> morphed;   // + opening/closing
  std::vector<ScoredMask> final;     // + NMS
  std::vector<std::size_t> kept;     // proposal indices surviving NMS
};

inline StagedProposals run_pipeline(const RunConfig& cfg, const Scene& s, std::span<const LevelBundle> bundles,
                                    const MlpWeights& weights) {
  StagedProposals st;
  const auto refined = refine_batch(s.proposals, bundles, weights, cfg.threshold);
  const std::size_t n = refined.size();
  st.coarse.resize(n);
  st.refined.resize(n);
  st.filtered.resize(n);
  st.morphed.resize(n);
  parallel_for(n, [&](std::size_t i) {
    const auto& cp = s.proposals[i];
    const auto& rp = refined[i];
    const LevelBundle& b = *find_bundle(bundles, cp.level);
    st.coarse[i] = {coarse_mask(cp, s.image.width, s.image.height), cp.score};
    st.refined[i] = {rp.mask, rp.score};
    std::vector<double> full(b.labels.count, 0.0);
    for (auto [id, p] : rp.probabilities) full[id] = p;
    const auto smoothed = spx_bilateral_filter(full, b.stats, cfg.postprocess);
    std::vector<std::uint32_t> ids;
    for (auto [id, p] : rp.probabilities)  // superpixels outside the window stay background
      if (smoothed[id] > cfg.postprocess.filter_threshold) ids.push_back(id);
    st.filtered[i] = {rasterize_superpixels(b.labels, ids, &b.stats), rp.score};
    st.morphed[i] = {open_close(st.filtered[i].mask, cfg.postprocess.radius), rp.score};
  });
  std::vector<BinaryMask> masks;
  std::vector<double> scores;
  for (const auto& m : st.morphed) {
    masks.push_back(m.mask);
    scores.push_back(m.score);
  }
  st.kept = nms(masks, scores, cfg.postprocess.nms_iou);
  for (auto k : st.kept) st.final.push_back(st.morphed[k]);
  return st;
}

// ---------------------------------------------------------------------------
// commands

struct SegmentSummary {
  int level = 0;
  std::uint32_t count = 0;
  std::string path;
};

inline std::vector<SegmentSummary> cmd_segment(const RunConfig& cfg, const std::string& image_path,
                                               const std::string& features_path, const std::string& out_dir,
                                               std::ostream* log = nullptr) {
  const RgbImage img = load_image(image_path);
  std::optional<FeatureMap> fm;
  std::string fpath = features_path;
  if (fpath.empty())
    for (const auto& l : cfg.levels)
      if (!l.features.empty()) fpath = l.features;
  if (!fpath.empty()) fm = read_feature_map(fpath);
  const auto maps = segment_levels(cfg, img, fm ? &*fm : nullptr, image_path);
  fs::create_directories(out_dir);
  std::vector<SegmentSummary> out;
  const std::string stem = fs::path(image_path).stem().string();
  for (std::size_t i = 0; i < maps.size(); ++i) {
    SegmentSummary s{cfg.levels[i].level, maps[i].count,
                     (fs::path(out_dir) / (stem + "_level" + std::to_string(cfg.levels[i].level) + ".spxl")).string()};
    write_label_map(maps[i], s.path);
    out.push_back(s);
  }
  if (log) {
    *log << stem << ':';
    for (const auto& s : out) *log << " level" << s.level << '=' << s.count;
    *log << '\n';
  }
  return out;
}

inline std::vector<std::string> list_images(const std::string& dir) {
  require(fs::is_directory(dir), Errc::io_error, "cannot open directory " + dir);
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png" || ext == ".ppm" || ext == ".pgm" || ext == ".pnm") files.push_back(e.path().string());
  }
  std::sort(files.begin(), files.end());
  return files;
}

/// Calibrates k of every level on the images of `image_dir` (feature maps
/// are read from <stem>.fmap next to each image when a level needs them).
/// Unreached targets are recorded as a warning on the level.
inline RunConfig cmd_calibrate(const RunConfig& cfg, const std::string& image_dir, std::ostream* log = nullptr) {
  const auto files = list_images(image_dir);
  require(!files.empty(), Errc::invalid_argument, "calibrate: no images in " + image_dir);
  const bool need_features =
      std::any_of(cfg.levels.begin(), cfg.levels.end(), [](const LevelConfig& l) { return l.fh.alpha > 0.0; });
  std::vector<RgbImage> images(files.size());
  std::vector<std::optional<FeatureMap>> features(files.size());
  parallel_for(files.size(), [&](std::size_t i) {
    images[i] = load_image(files[i]);
    const fs::path fp = fs::path(files[i]).replace_extension(".fmap");
    if (need_features && fs::exists(fp)) features[i] = read_feature_map(fp.string());
  });
  RunConfig out = cfg;
  for (auto& l : out.levels) {
    std::vector<SegmentationInput> inputs;
    for (std::size_t i = 0; i < images.size(); ++i) {
      require(l.fh.alpha == 0.0 || features[i].has_value(), Errc::invalid_argument,
              "calibrate: level " + std::to_string(l.level) + " has alpha > 0 but " + files[i] + " has no feature map");
      inputs.push_back({&images[i], l.fh.alpha > 0.0 ? &*features[i] : nullptr});
    }
    const auto r = calibrate(inputs, l.target_count, l.fh, cfg.calibration);
    l.fh = r.params;
    l.achieved_count = r.mean_count;
    l.warning = r.reached ? "" : "target " + std::to_string(l.target_count) + " not reached; best mean count " +
                                     std::to_string(r.mean_count);
    if (log)
      *log << "level " << l.level << ": target " << l.target_count << " k=" << l.fh.k << " mean=" << r.mean_count
           << (r.reached ? "" : " (not reached)") << '\n';
  }
  return out;
}

/// Writes `count` synthetic scenes plus dataset.json into `out_dir`.
inline Dataset cmd_synth(const RunConfig& cfg, int count, std::uint64_t seed, const std::string& out_dir) {
  require(count >= 0, Errc::invalid_argument, "synth: negative count");
  fs::create_directories(out_dir);
  const fs::path root(out_dir);
  const std::string manifest = (root / "dataset.json").string();
  Dataset d;
  d.path = manifest;
  d.entries.resize(static_cast<std::size_t>(count));
  parallel_for(static_cast<std::size_t>(count), [&](std::size_t i) {
    char name[32];
    std::snprintf(name, sizeof name, "img_%04zu", i);
    const std::string n = name;
    SynthScene sc = generate_scene(cfg.synth, seed, i);
    save_png(sc.image, (root / (n + ".png")).string());
    write_feature_map(sc.features, (root / (n + ".fmap")).string());
    write_feature_map(affinity_feature_map(sc.objects, sc.image.width, sc.image.height),
                      (root / (n + ".affinity.fmap")).string());
    write_gt_manifest((root / (n + ".gt.json")).string(), n + ".png", sc.objects);
    write_proposals_manifest((root / (n + ".proposals.json")).string(), n + ".png", cfg.synth.level_count,
                             sc.proposals, sc.proposal_gt);
    d.entries[i] = DatasetEntry{n, n + ".png", n + ".fmap", n + ".gt.json", n + ".proposals.json", n + ".affinity.fmap"};
  });
  json imgs = json::array();
  for (const auto& e : d.entries)
    imgs.push_back({{"name", e.name},
                    {"image", e.image},
                    {"features", e.features},
                    {"gt", e.gt},
                    {"proposals", e.proposals},
                    {"affinity", e.affinity}});
  write_json_file({{"seed", seed}, {"feature_dim", cfg.synth.feature_dim}, {"images", imgs}}, manifest);
  return load_dataset(manifest);
}

/// Scenes with their level bundles, loaded in parallel, merged in order.
struct PreparedScene {
  Scene scene;
  std::vector<LevelBundle> bundles;
};

inline std::vector<PreparedScene> prepare_scenes(const RunConfig& cfg, std::vector<Scene> scenes) {
  std::vector<PreparedScene> out(scenes.size());
  parallel_for(scenes.size(), [&](std::size_t i) {
    out[i].scene = std::move(scenes[i]);
    const auto& s = out[i].scene;
    out[i].bundles = build_bundles(cfg, s.image, s.features ? &*s.features : nullptr, s.name);
  });
  return out;
}

inline std::vector<PreparedScene> prepare_dataset(const RunConfig& cfg, const Dataset& d) {
  std::vector<Scene> scenes(d.entries.size());
  parallel_for(d.entries.size(), [&](std::size_t i) { scenes[i] = load_scene(d.entries[i]); });
  return prepare_scenes(cfg, std::move(scenes));
}

struct TrainOutcome {
  TrainResult result;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

inline TrainOutcome train_on(const RunConfig& cfg, std::span<const PreparedScene> scenes) {
  std::vector<std::vector<SpxSample>> per(scenes.size());
  parallel_for(scenes.size(), [&](std::size_t i) { per[i] = scene_samples(scenes[i].scene, scenes[i].bundles); });
  std::vector<SpxSample> all;
  for (auto& v : per) std::move(v.begin(), v.end(), std::back_inserter(all));
  all = balance_samples(std::move(all), cfg.negative_ratio, cfg.seed);
  TrainOutcome out;
  for (const auto& s : all) (s.label ? out.positives : out.negatives)++;
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  out.result = train(all, tc);
  return out;
}

inline TrainOutcome cmd_train(const RunConfig& cfg, const std::string& dataset_path, const std::string& weights_out,
                              std::ostream* log = nullptr) {
  const auto scenes = prepare_dataset(cfg, load_dataset(dataset_path));
  auto out = train_on(cfg, scenes);
  save_weights(out.result.weights, weights_out);
  json curve = out.result.loss_curve;
  write_json_file({{"positives", out.positives}, {"negatives", out.negatives}, {"loss_curve", curve}},
                  weights_out + ".log.json");
  if (log)
    *log << "trained on " << out.positives << " positive / " << out.negatives << " negative samples; final loss "
         << (out.result.loss_curve.empty() ? 0.0 : out.result.loss_curve.back()) << '\n';
  return out;
}

/// Writes per image <name>.refined.json and mask PNGs, plus index.json.
inline void cmd_refine(const RunConfig& cfg, const std::string& dataset_path, const std::string& weights_path,
                       const std::string& out_dir, bool postprocess, std::ostream* log = nullptr) {
  const MlpWeights w = load_weights(weights_path);
  const auto scenes = prepare_dataset(cfg, load_dataset(dataset_path));
  fs::create_directories(out_dir);
  json index = json::array();
  std::size_t total = 0;
  for (const auto& ps : scenes) {
    const auto st = run_pipeline(cfg, ps.scene, ps.bundles, w);
    json props = json::array();
    const auto& chosen = postprocess ? st.final : st.refined;
    for (std::size_t i = 0; i < chosen.size(); ++i) {
      const std::size_t src = postprocess ? st.kept[i] : i;
      char idx[24];
      std::snprintf(idx, sizeof idx, "%04zu", i);
      const std::string file = ps.scene.name + "_r" + idx + ".png";
      save_mask_png(chosen[i].mask, (fs::path(out_dir) / file).string());
      props.push_back({{"mask_png", file},
                       {"score", chosen[i].score},
                       {"level", ps.scene.proposals[src].level},
                       {"source", src}});
    }
    total += chosen.size();
    const std::string rj = ps.scene.name + ".refined.json";
    write_json_file({{"image", ps.scene.name}, {"postprocessed", postprocess}, {"proposals", props}},
                    (fs::path(out_dir) / rj).string());
    index.push_back({{"name", ps.scene.name}, {"refined", rj}});
  }
  write_json_file({{"images", index}}, (fs::path(out_dir) / "index.json").string());
  if (log) *log << "wrote " << total << " refined proposals for " << scenes.size() << " images\n";
}

/// Refined proposals from a cmd_refine output directory, keyed by image name.
inline std::map<std::string, std::vector<ScoredMask>> load_refined_index(const std::string& dir) {
  const std::string ipath = (fs::path(dir) / "index.json").string();
  const json j = read_json_file(ipath);
  require(j.contains("images") && j.at("images").is_array(), Errc::config_error, ipath + ": field 'images' must be an array");
  std::map<std::string, std::vector<ScoredMask>> out;
  for (const auto& e : j.at("images")) {
    const std::string name = e.at("name").get<std::string>();
    const std::string rpath = resolve(ipath, e.at("refined").get<std::string>());
    const json r = read_json_file(rpath);
    auto& v = out[name];
    for (const auto& p : r.at("proposals")) {
      ScoredMask sm;
      sm.mask = load_mask(resolve(rpath, p.at("mask_png").get<std::string>()));
      sm.score = p.at("score").get<double>();
      v.push_back(std::move(sm));
    }
  }
  return out;
}

struct EvalOutcome {
  std::vector<std::pair<std::string, MetricsReport>> rows;
  json to_json() const {
    json j = json::object();
    for (const auto& [name, r] : rows) j[name] = spxr::to_json(r);
    return j;
  }
};

/// Stage-by-stage reports (coarse baseline, refined, +filter, +open/close,
/// +NMS) over prepared scenes. Segmentation measures use every level.
inline EvalOutcome evaluate_scenes(const RunConfig& cfg, std::span<const PreparedScene> scenes, const MlpWeights& w,
                                   bool postprocess = true) {
  std::vector<StagedProposals> staged(scenes.size());
  for (std::size_t i = 0; i < scenes.size(); ++i)
    staged[i] = run_pipeline(cfg, scenes[i].scene, scenes[i].bundles, w);
  auto report = [&](auto pick) {
    std::vector<EvalImage> imgs(scenes.size());
    for (std::size_t i = 0; i < scenes.size(); ++i) {
      imgs[i].proposals = pick(staged[i]);
      imgs[i].objects = scenes[i].scene.objects;
      for (const auto& b : scenes[i].bundles) imgs[i].segmentations.push_back(&b.labels);
    }
    return evaluate(imgs, cfg.metrics);
  };
  EvalOutcome out;
  out.rows.emplace_back("coarse", report([](const StagedProposals& s) { return s.coarse; }));
  out.rows.emplace_back("refined", report([](const StagedProposals& s) { return s.refined; }));
  if (postprocess) {
    out.rows.emplace_back("+filter", report([](const StagedProposals& s) { return s.filtered; }));
    out.rows.emplace_back("+filter+morph", report([](const StagedProposals& s) { return s.morphed; }));
    out.rows.emplace_back("+filter+morph+nms", report([](const StagedProposals& s) { return s.final; }));
  }
  return out;
}

/// Evaluates either a refined index (`refined_dir`) or the full staged
/// pipeline from `weights_path`; writes metrics.json and metrics.txt.
inline EvalOutcome cmd_eval(const RunConfig& cfg, const std::string& dataset_path, const std::string& weights_path,
                            const std::string& refined_dir, const std::string& out_dir, bool postprocess,
                            std::ostream* log = nullptr) {
  const auto scenes = prepare_dataset(cfg, load_dataset(dataset_path));
  EvalOutcome out;
  if (!refined_dir.empty()) {
    const auto refined = load_refined_index(refined_dir);
    std::vector<EvalImage> imgs(scenes.size());
    for (std::size_t i = 0; i < scenes.size(); ++i) {
      const auto it = refined.find(scenes[i].scene.name);
      require(it != refined.end(), Errc::config_error,
              refined_dir + "/index.json: no entry for image " + scenes[i].scene.name);
      imgs[i].proposals = it->second;
      imgs[i].objects = scenes[i].scene.objects;
      for (const auto& b : scenes[i].bundles) imgs[i].segmentations.push_back(&b.labels);
    }
    out.rows.emplace_back("refined-index", evaluate(imgs, cfg.metrics));
  } else {
    require(!weights_path.empty(), Errc::invalid_argument, "eval: need weights or a refined directory");
    out = evaluate_scenes(cfg, scenes, load_weights(weights_path), postprocess);
  }
  fs::create_directories(out_dir);
  write_json_file(out.to_json(), (fs::path(out_dir) / "metrics.json").string());
  const std::string table = to_text(out.rows);
  std::ofstream((fs::path(out_dir) / "metrics.txt").string()) << table;
  if (log) *log << table;
  return out;
}

}  // namespace spxr
