#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lunet/checkpoint.hpp"
#include "lunet/image_io.hpp"
#include "lunet/inference.hpp"
#include "lunet/metrics.hpp"
#include "lunet/runconfig.hpp"
#include "lunet/synthetic.hpp"
#include "lunet/trainer.hpp"

namespace fs = std::filesystem;
using namespace lunet;

namespace {

Colormap load_colormap_or_default(const std::string& path) {
  return path.empty() ? Colormap::default_map() : Colormap::load(path);
}

std::vector<std::string> list_pngs(const std::string& dir) {
  if (!fs::is_directory(dir))
    throw IoError("'" + dir + "' is not a directory");
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png")
      out.push_back(e.path().string());
  std::sort(out.begin(), out.end());
  return out;
}

// ---- train -------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  bool resume = false;
};

/// Partitions loaded samples by manifest split tags, or by the seeded
/// patient-stratified split when no row carries a tag.
void split_samples(std::vector<FundusSample> samples,
                   const std::vector<std::string>& tags, uint64_t seed,
                   std::vector<FundusSample>& train_set,
                   std::vector<FundusSample>& val_set) {
  const size_t tagged =
      static_cast<size_t>(std::count_if(tags.begin(), tags.end(),
                                        [](const std::string& t) {
                                          return !t.empty();
                                        }));
  if (tagged != 0 && tagged != tags.size())
    throw ConfigError(
        "manifest: either every row or no row must carry a split tag");

  SplitManifest split;
  if (tagged == 0) {
    split = split_dataset(samples, 0.7, 0.15, seed);
    std::cerr << "no split tags in manifest; patient-stratified split: "
              << split.train.size() << " train / " << split.val.size()
              << " val / " << split.test.size() << " test\n";
  } else {
    for (size_t i = 0; i < samples.size(); ++i) {
      if (tags[i] == "train")
        split.train.push_back(samples[i].id);
      else if (tags[i] == "val")
        split.val.push_back(samples[i].id);
      else if (tags[i] == "test")
        split.test.push_back(samples[i].id);
      else
        throw ConfigError("manifest: sample '" + samples[i].id +
                          "' has unknown split tag '" + tags[i] + "'");
    }
  }

  const std::set<std::string> train_ids(split.train.begin(),
                                        split.train.end());
  const std::set<std::string> val_ids(split.val.begin(), split.val.end());
  for (FundusSample& s : samples) {
    if (train_ids.count(s.id))
      train_set.push_back(std::move(s));
    else if (val_ids.count(s.id))
      val_set.push_back(std::move(s));
    // test samples are left for `lunet predict` + `lunet eval`
  }
  if (train_set.empty() || val_set.empty())
    throw ConfigError("split leaves train or validation empty");
}

int run_train(const TrainArgs& args) {
  RunConfig cfg = parse_run_config(args.config);
  if (cfg.paths.manifest.empty())
    throw ConfigError("config: paths.manifest is required for training");
  if (cfg.paths.checkpoint_dir.empty())
    throw ConfigError("config: paths.checkpoint_dir is required for training");

  const Colormap cm = load_colormap_or_default(cfg.paths.colormap);
  const std::string base_dir = fs::path(cfg.paths.manifest).parent_path().string();
  const auto rows = read_manifest(cfg.paths.manifest);

  std::vector<FundusSample> samples;
  std::vector<std::string> tags;
  for (const ManifestRow& row : rows) {
    if (row.mask_path.empty()) {
      std::cerr << "skipping '" << row.id << "': no ground-truth mask\n";
      continue;
    }
    samples.push_back(load_sample(row, cm, base_dir));
    tags.push_back(row.split);
  }
  if (samples.size() < 2)
    throw ConfigError("manifest provides fewer than two labeled samples");

  std::vector<FundusSample> train_set, val_set;
  split_samples(std::move(samples), tags, cfg.seed, train_set, val_set);
  std::cerr << "training on " << train_set.size() << " samples, validating on "
            << val_set.size() << "\n";

  std::unique_ptr<LUNet> model;
  TrainStart start;
  if (args.resume) {
    ResumeBundle bundle = load_resume_bundle(cfg.paths.checkpoint_dir);
    model = std::move(bundle.model);
    start = std::move(bundle.start);
    std::cerr << "resuming from epoch " << start.start_epoch << "\n";
  } else {
    model = std::make_unique<LUNet>(cfg.model);
    model->init_weights(cfg.seed);
  }

  TrainConfig tc = cfg.train;
  tc.on_epoch = [&tc](const EpochStats& e) {
    std::fprintf(stderr, "epoch %lld/%lld  train %.6f  val %.6f\n",
                 static_cast<long long>(e.epoch),
                 static_cast<long long>(tc.epochs), e.train_loss, e.val_loss);
  };
  const TrainResult res = train(*model, train_set, val_set, tc, std::move(start));
  std::cout << "best validation loss " << res.best.best_val_loss << " at epoch "
            << res.best.best_epoch << "\n"
            << "checkpoints in " << cfg.paths.checkpoint_dir << "\n";
  return 0;
}

// ---- predict -----------------------------------------------------------------

struct PredictArgs {
  std::string model_path, input_dir, output_dir, colormap;
  std::vector<std::string> inputs;
  bool tta = true;
  double threshold = 0.5;
  bool prob_dump = false;
  bool overlay = false;
};

int run_predict(const PredictArgs& args) {
  std::vector<std::string> files = args.inputs;
  if (!args.input_dir.empty()) {
    const auto listed = list_pngs(args.input_dir);
    files.insert(files.end(), listed.begin(), listed.end());
  }
  if (files.empty()) throw ConfigError("predict: no input images given");

  const std::unique_ptr<LUNet> model = load_checkpoint(args.model_path);
  const Colormap cm = load_colormap_or_default(args.colormap);
  const TTAPlan plan = TTAPlan::standard();
  // masks go to the output dir itself so `lunet eval` can scan it; extras
  // live in subdirectories to keep the mask set clean
  fs::create_directories(args.output_dir);
  if (args.prob_dump) fs::create_directories(fs::path(args.output_dir) / "prob");
  if (args.overlay)
    fs::create_directories(fs::path(args.output_dir) / "overlay");

  size_t failed = 0;
  for (const std::string& file : files) {
    try {
      const Tensor image = normalize_u8(read_png(file));
      const Tensor prob =
          predict_probabilities(*model, image, args.tta ? &plan : nullptr);
      const Tensor label = binarize_prediction(prob, args.threshold);
      const std::string stem = fs::path(file).stem().string();
      write_png((fs::path(args.output_dir) / (stem + ".png")).string(),
                cm.encode(label));
      if (args.prob_dump)
        write_probability_dump(
            (fs::path(args.output_dir) / "prob" / (stem + ".prob")).string(),
            prob);
      if (args.overlay)
        write_png(
            (fs::path(args.output_dir) / "overlay" / (stem + ".png")).string(),
            denormalize_u8(render_overlay(image, label)));
      std::cerr << stem << " done\n";
    } catch (const std::exception& e) {
      ++failed;
      std::cerr << "warning: '" << file << "' failed: " << e.what() << "\n";
    }
  }
  if (failed == files.size())
    throw IoError("predict: every input failed");
  return 0;
}

// ---- eval --------------------------------------------------------------------

struct EvalArgs {
  std::string pred_dir, gt_dir, colormap, report;
  int64_t bootstrap = 1000;
  double frac = 0.8;
  uint64_t seed = 0;
};

int run_eval(const EvalArgs& args) {
  BootstrapParams bp;
  bp.n_rounds = args.bootstrap;
  bp.sample_frac = args.frac;
  bp.seed = args.seed;
  const Colormap cm = load_colormap_or_default(args.colormap);
  const EvalReport rep = evaluate_dirs(args.pred_dir, args.gt_dir, cm, bp);
  std::printf("images         %zu\n", rep.per_image.size());
  std::printf("dice artery    %.4f  [%.4f, %.4f]\n", rep.mean_dice_a,
              rep.ci_a_lo, rep.ci_a_hi);
  std::printf("dice venule    %.4f  [%.4f, %.4f]\n", rep.mean_dice_v,
              rep.ci_v_lo, rep.ci_v_hi);
  if (!args.report.empty()) {
    write_report(args.report, rep);
    std::cerr << "report written to " << args.report << "\n";
  }
  return 0;
}

// ---- prepare -----------------------------------------------------------------

struct PrepareArgs {
  std::string kind, input_dir, output_dir, od_centers;
};

std::map<std::string, std::pair<int64_t, int64_t>> read_od_centers(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open od-centers file '" + path + "'");
  std::map<std::string, std::pair<int64_t, int64_t>> out;
  std::string stem;
  int64_t x = 0, y = 0;
  while (in >> stem >> x >> y) out[stem] = {x, y};
  if (out.empty())
    throw ConfigError("od-centers file '" + path + "' has no `stem x y` rows");
  return out;
}

int run_prepare(const PrepareArgs& args) {
  const ExternalKind kind = external_kind_from_string(args.kind);
  std::map<std::string, std::pair<int64_t, int64_t>> centers;
  if (kind == ExternalKind::hrf) {
    if (args.od_centers.empty())
      throw ConfigError("prepare: --od-centers is required for kind 'hrf'");
    centers = read_od_centers(args.od_centers);
  }

  const auto files = list_pngs(args.input_dir);
  if (files.empty())
    throw ConfigError("prepare: no .png files in '" + args.input_dir + "'");
  fs::create_directories(args.output_dir);

  size_t failed = 0;
  for (const std::string& file : files) {
    try {
      const std::string stem = fs::path(file).stem().string();
      std::optional<std::pair<int64_t, int64_t>> od;
      if (kind == ExternalKind::hrf) {
        const auto it = centers.find(stem);
        if (it == centers.end())
          throw ConfigError("no od center listed for '" + stem + "'");
        od = it->second;
      }
      const Tensor framed = adapt_external(read_png(file), kind, od);
      write_png((fs::path(args.output_dir) / (stem + ".png")).string(),
                framed);
      std::cerr << stem << " done\n";
    } catch (const std::exception& e) {
      ++failed;
      std::cerr << "warning: '" << file << "' failed: " << e.what() << "\n";
    }
  }
  if (failed == files.size()) throw IoError("prepare: every input failed");
  return 0;
}

// ---- synth -------------------------------------------------------------------

struct SynthArgs {
  std::string output_dir;
  int count = 10;
  uint64_t seed = 0;
  SyntheticOptions opts;
  bool no_unknown_band = false;
};

int run_synth(const SynthArgs& args) {
  SyntheticOptions opts = args.opts;
  opts.unknown_band = !args.no_unknown_band;
  write_synthetic_dataset(args.output_dir, args.count, args.seed, opts);
  std::cout << args.count << " samples written to " << args.output_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"arteriole/venule segmentation of fundus images"};
  app.require_subcommand(1);

  TrainArgs train_args;
  CLI::App* cmd_train =
      app.add_subcommand("train", "train a model from a run config");
  cmd_train->add_option("config", train_args.config, "run config file")
      ->required();
  cmd_train->add_flag("--resume", train_args.resume,
                      "continue from last.ckpt in the checkpoint dir");

  PredictArgs predict_args;
  CLI::App* cmd_predict =
      app.add_subcommand("predict", "segment images with a trained model");
  cmd_predict->add_option("-m,--model", predict_args.model_path, "checkpoint")
      ->required();
  cmd_predict->add_option("inputs", predict_args.inputs, "image files");
  cmd_predict->add_option("-i,--input-dir", predict_args.input_dir,
                          "directory of .png images");
  cmd_predict->add_option("-o,--output", predict_args.output_dir,
                          "output directory")
      ->required();
  cmd_predict->add_option("--colormap", predict_args.colormap,
                          "colormap for the output masks");
  cmd_predict->add_flag("--tta,!--no-tta", predict_args.tta,
                        "test-time augmentation (default on)");
  cmd_predict->add_option("--threshold", predict_args.threshold,
                          "binarization threshold");
  cmd_predict->add_flag("--prob-dump", predict_args.prob_dump,
                        "also write raw probability maps");
  cmd_predict->add_flag("--overlay", predict_args.overlay,
                        "also write blended overlays");

  EvalArgs eval_args;
  CLI::App* cmd_eval =
      app.add_subcommand("eval", "score predictions against ground truth");
  cmd_eval->add_option("pred", eval_args.pred_dir, "prediction mask directory")
      ->required();
  cmd_eval->add_option("gt", eval_args.gt_dir, "ground-truth mask directory")
      ->required();
  cmd_eval->add_option("--colormap", eval_args.colormap, "mask colormap");
  cmd_eval->add_option("--bootstrap", eval_args.bootstrap,
                       "bootstrap rounds for the confidence intervals");
  cmd_eval->add_option("--frac", eval_args.frac, "bootstrap sample fraction");
  cmd_eval->add_option("--seed", eval_args.seed, "bootstrap seed");
  cmd_eval->add_option("-o,--report", eval_args.report,
                       "write the full report to this path");

  PrepareArgs prepare_args;
  CLI::App* cmd_prepare = app.add_subcommand(
      "prepare", "reframe external datasets to the native field of view");
  cmd_prepare
      ->add_option("--kind", prepare_args.kind,
                   "unaf | inspire_avr | les_av | hrf")
      ->required();
  cmd_prepare->add_option("input", prepare_args.input_dir, "source directory")
      ->required();
  cmd_prepare
      ->add_option("output", prepare_args.output_dir, "output directory")
      ->required();
  cmd_prepare->add_option("--od-centers", prepare_args.od_centers,
                          "`stem x y` rows; required for hrf");

  SynthArgs synth_args;
  CLI::App* cmd_synth =
      app.add_subcommand("synth", "generate a synthetic labeled dataset");
  cmd_synth->add_option("output", synth_args.output_dir, "output directory")
      ->required();
  cmd_synth->add_option("--count", synth_args.count, "number of samples");
  cmd_synth->add_option("--seed", synth_args.seed, "generator seed");
  cmd_synth->add_option("--size", synth_args.opts.size, "image side length");
  cmd_synth->add_option("--trees", synth_args.opts.trees_per_class,
                        "vessel trees per class");
  cmd_synth->add_option("--max-depth", synth_args.opts.max_depth,
                        "branching depth");
  cmd_synth->add_option("--min-width", synth_args.opts.min_width,
                        "narrowest vessel width");
  cmd_synth->add_option("--max-width", synth_args.opts.max_width,
                        "widest vessel width");
  cmd_synth->add_option("--crossing-frac",
                        synth_args.opts.crossing_both_fraction,
                        "fraction of crossings labeled in both planes");
  cmd_synth->add_flag("--no-unknown-band", synth_args.no_unknown_band,
                      "skip the unknown-band relabeling");

  try {
    app.parse(argc, argv);
    if (cmd_train->parsed()) return run_train(train_args);
    if (cmd_predict->parsed()) return run_predict(predict_args);
    if (cmd_eval->parsed()) return run_eval(eval_args);
    if (cmd_prepare->parsed()) return run_prepare(prepare_args);
    if (cmd_synth->parsed()) return run_synth(synth_args);
    return 1;
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);  // prints help or the parse error
    return rc == 0 ? 0 : 1;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 2;
  }
}
