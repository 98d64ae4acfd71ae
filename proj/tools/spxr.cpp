// spxr: superpixel segmentation, proposal refinement and evaluation.

#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "spxr/spxr.hpp"

namespace {

struct Common {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  bool seed_set = false;
  double alpha = -1.0;
  std::string levels;
};

void add_common(CLI::App* app, Common& c, bool with_out = true) {
  app->add_option("--config", c.config, "run configuration (JSON)");
  app->add_option("--seed", c.seed, "override the configured seed")->each([&c](const std::string&) { c.seed_set = true; });
  app->add_option("--alpha", c.alpha, "override alpha on every level")->check(CLI::Range(0.0, 1.0));
  app->add_option("--levels", c.levels, "comma-separated subset of level indices");
  if (with_out) app->add_option("--out", c.out, "output path")->required();
}

std::vector<int> parse_levels(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      spxr::require(used == item.size(), spxr::Errc::invalid_argument, "--levels: bad entry '" + item + "'");
    } catch (const std::logic_error&) {
      spxr::fail(spxr::Errc::invalid_argument, "--levels: bad entry '" + item + "'");
    }
  }
  return out;
}

spxr::RunConfig resolve_config(const Common& c) {
  spxr::RunConfig cfg = c.config.empty() ? spxr::default_run_config() : spxr::load_run_config(c.config);
  if (c.seed_set) cfg.seed = c.seed;
  if (c.alpha >= 0.0)
    for (auto& l : cfg.levels) l.fh.alpha = c.alpha;
  if (!c.levels.empty()) {
    std::vector<spxr::LevelConfig> kept;
    for (int lv : parse_levels(c.levels)) kept.push_back(spxr::level_config(cfg, lv));
    cfg.levels = std::move(kept);
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"superpixel-based refinement of object proposals"};
  app.require_subcommand(1);

  Common seg_c, cal_c, syn_c, tr_c, ref_c, ev_c;
  std::string seg_image, seg_features, cal_images, tr_dataset, ref_dataset, ref_weights, ev_dataset, ev_weights,
      ev_refined;
  int syn_count = 0;
  bool ref_nopp = false, ev_nopp = false;

  auto* seg = app.add_subcommand("segment", "segment one image at every configured level");
  add_common(seg, seg_c);
  seg->add_option("--image", seg_image, "input image (PNG/PNM)")->required();
  seg->add_option("--features", seg_features, "feature map (FMAP), needed when alpha > 0");

  auto* cal = app.add_subcommand("calibrate", "fit k per level to the target superpixel counts");
  add_common(cal, cal_c);
  cal->add_option("--images", cal_images, "directory of calibration images")->required();

  auto* syn = app.add_subcommand("synth", "generate a synthetic dataset");
  add_common(syn, syn_c);
  syn->add_option("--count", syn_count, "number of images")->required()->check(CLI::NonNegativeNumber);

  auto* tr = app.add_subcommand("train", "train the superpixel classifier");
  add_common(tr, tr_c);
  tr->add_option("--dataset", tr_dataset, "dataset manifest")->required();

  auto* ref = app.add_subcommand("refine", "refine coarse proposals");
  add_common(ref, ref_c);
  ref->add_option("--dataset", ref_dataset, "dataset manifest")->required();
  ref->add_option("--weights", ref_weights, "classifier weights (MLPW)")->required();
  ref->add_flag("--no-postprocess", ref_nopp, "skip filtering, morphology and NMS");

  auto* ev = app.add_subcommand("eval", "evaluate proposals against ground truth");
  add_common(ev, ev_c);
  ev->add_option("--dataset", ev_dataset, "dataset manifest")->required();
  ev->add_option("--weights", ev_weights, "classifier weights (MLPW)");
  ev->add_option("--refined", ev_refined, "output directory of a refine run");
  ev->add_flag("--no-postprocess", ev_nopp, "report only the coarse and refined stages");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    nlohmann::json err{{"error", "usage"}, {"message", e.what()}};
    std::cerr << err.dump() << '\n';
    return 2;
  }

  try {
    if (*seg) {
      spxr::cmd_segment(resolve_config(seg_c), seg_image, seg_features, seg_c.out, &std::cout);
    } else if (*cal) {
      const auto cfg = spxr::cmd_calibrate(resolve_config(cal_c), cal_images, &std::cout);
      spxr::write_json_file(spxr::to_json(cfg), cal_c.out);
    } else if (*syn) {
      const auto cfg = resolve_config(syn_c);
      const auto d = spxr::cmd_synth(cfg, syn_count, cfg.seed, syn_c.out);
      std::cout << "wrote " << d.entries.size() << " images to " << d.path << '\n';
    } else if (*tr) {
      spxr::cmd_train(resolve_config(tr_c), tr_dataset, tr_c.out, &std::cout);
    } else if (*ref) {
      spxr::cmd_refine(resolve_config(ref_c), ref_dataset, ref_weights, ref_c.out, !ref_nopp, &std::cout);
    } else if (*ev) {
      spxr::cmd_eval(resolve_config(ev_c), ev_dataset, ev_weights, ev_refined, ev_c.out, !ev_nopp, &std::cout);
    }
  } catch (const spxr::Error& e) {
    nlohmann::json err{{"error", spxr::errc_name(e.code())}, {"message", e.what()}};
    std::cerr << err.dump() << '\n';
    return 1;
  } catch (const std::exception& e) {
    nlohmann::json err{{"error", "internal"}, {"message", e.what()}};
    std::cerr << err.dump() << '\n';
    return 1;
  }
  return EXIT_SUCCESS;
}
