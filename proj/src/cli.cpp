#include "surgseg/cli.hpp"

#include <omp.h>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "surgseg/checkpoint.hpp"
#include "surgseg/errors.hpp"
#include "surgseg/evaluator.hpp"
#include "surgseg/experiment.hpp"
#include "surgseg/fileutil.hpp"
#include "surgseg/heatmap.hpp"
#include "surgseg/image_io.hpp"
#include "surgseg/manifest.hpp"
#include "surgseg/synthetic.hpp"
#include "surgseg/trainer.hpp"

namespace surgseg {
namespace fs = std::filesystem;

int exit_code_for(const std::exception& error) {
  if (dynamic_cast<const ConfigError*>(&error)) return kExitConfig;
  if (dynamic_cast<const DataError*>(&error)) return kExitData;
  if (dynamic_cast<const fs::filesystem_error*>(&error)) return kExitData;
  return kExitRuntime;
}

namespace {

// Preset values are overridden by whichever of these are set (from the
// config file or the command line).
struct RunFlags {
  std::string preset = "desk";
  std::optional<int> height, width, depth, base_channels;
  std::optional<bool> batch_norm;
  std::optional<int> iters, batch_size, checkpoint_every;
  std::optional<double> lr, clip, crop_min, crop_max;
};

struct ResolvedRun {
  UNetConfig model;
  TrainConfig train;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--preset", f.preset, "Hyperparameter preset")->check(CLI::IsMember({"desk", "full"}));
  cmd->add_option("--height", f.height, "Working height in pixels");
  cmd->add_option("--width", f.width, "Working width in pixels");
  cmd->add_option("--depth", f.depth, "Number of U-Net downsampling stages");
  cmd->add_option("--base-channels", f.base_channels, "Features at the first U-Net stage");
  cmd->add_option("--batch-norm", f.batch_norm, "Batch normalization after each 3x3 convolution");
  cmd->add_option("--iters", f.iters, "Training iterations");
  cmd->add_option("--batch-size", f.batch_size, "Images per training step");
  cmd->add_option("--lr", f.lr, "Initial learning rate");
  cmd->add_option("--clip", f.clip, "Global gradient-norm clip (0 disables)");
  cmd->add_option("--crop-min", f.crop_min, "Smallest random-crop scale");
  cmd->add_option("--crop-max", f.crop_max, "Largest random-crop scale");
  cmd->add_option("--checkpoint-every", f.checkpoint_every, "Checkpoint interval in iterations (0 = never)");
}

ResolvedRun resolve_run(const RunFlags& f, const ClassTaxonomy& taxonomy) {
  ResolvedRun r;
  if (f.preset == "full") {
    r.model = UNetConfig::full();
    r.train = TrainConfig::full();
  } else {
    r.model = UNetConfig::desk();
    r.train = TrainConfig::desk();
  }
  if (f.height) r.model.height = *f.height;
  if (f.width) r.model.width = *f.width;
  if (f.depth) r.model.depth = *f.depth;
  if (f.base_channels) r.model.base_channels = *f.base_channels;
  if (f.batch_norm) r.model.batch_norm = *f.batch_norm;
  if (f.iters) r.train.total_iters = *f.iters;
  if (f.batch_size) r.train.batch_size = *f.batch_size;
  if (f.checkpoint_every) r.train.checkpoint_every = *f.checkpoint_every;
  if (f.lr) r.train.lr0 = *f.lr;
  if (f.clip) r.train.clip_grad_norm = *f.clip;
  if (f.crop_min) r.train.augment.crop_min = *f.crop_min;
  if (f.crop_max) r.train.augment.crop_max = *f.crop_max;
  r.model.num_classes = taxonomy.num_channels();
  r.model.validate();
  r.train.validate();
  return r;
}

// Reads the manifest and checks that every image it references exists.
Dataset load_dataset(const std::string& manifest_path) {
  Dataset ds = read_manifest(manifest_path);
  if (ds.images.empty()) throw DataError(manifest_path + ": manifest lists no images");
  for (const auto& img : ds.images) {
    if (!fs::exists(img.path)) throw DataError(manifest_path + ": image '" + img.image_id + "' missing at " + img.path);
  }
  return ds;
}

void print_counts(const Dataset& ds) {
  const auto counts = class_counts(ds.images, ds.taxonomy);
  for (int c = 0; c < ds.taxonomy.num_instruments(); ++c) {
    std::printf("%s\t%d\n", ds.taxonomy.name(c).c_str(), counts[c]);
  }
  std::printf("total\t%zu\n", ds.images.size());
}

std::string toml_string(const std::string& s) {
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"' || ch == '\\') out += '\\';
    out += ch;
  }
  return out + "\"";
}

// Effective settings in the format accepted by --config.
std::string config_snapshot(std::uint64_t seed, const std::string& manifest, const std::string& run_dir,
                            const RunFlags& flags, const ResolvedRun& run, double tau, int folds,
                            const std::string& fold_mode) {
  std::ostringstream out;
  out.precision(17);
  out << "seed = " << seed << "\n\n[crossval]\n";
  out << "manifest = " << toml_string(manifest) << "\n";
  out << "run-dir = " << toml_string(run_dir) << "\n";
  out << "preset = " << toml_string(flags.preset) << "\n";
  out << "height = " << run.model.height << "\n";
  out << "width = " << run.model.width << "\n";
  out << "depth = " << run.model.depth << "\n";
  out << "base-channels = " << run.model.base_channels << "\n";
  out << "batch-norm = " << (run.model.batch_norm ? "true" : "false") << "\n";
  out << "iters = " << run.train.total_iters << "\n";
  out << "batch-size = " << run.train.batch_size << "\n";
  out << "lr = " << run.train.lr0 << "\n";
  out << "clip = " << run.train.clip_grad_norm << "\n";
  out << "crop-min = " << run.train.augment.crop_min << "\n";
  out << "crop-max = " << run.train.augment.crop_max << "\n";
  out << "checkpoint-every = " << run.train.checkpoint_every << "\n";
  out << "tau = " << tau << "\n";
  out << "folds = " << folds << "\n";
  out << "fold-mode = " << toml_string(fold_mode) << "\n";
  return out.str();
}

ProgressFn log_progress(int total_iters) {
  const int every = std::max(1, total_iters / 10);
  return [every, total_iters](int it, double loss) {
    if (it % every == 0 || it + 1 == total_iters) spdlog::info("iter {}/{} loss {:.6f}", it + 1, total_iters, loss);
  };
}

void setup_logging(const std::string& level) {
  auto logger = spdlog::get("surgseg");
  if (!logger) logger = spdlog::stderr_color_mt("surgseg");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::from_str(level));
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"U-Net instrument segmentation and classification"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML/INI file with option defaults (flags take precedence)");
  std::uint64_t seed = 0;
  int threads = 0;
  std::string log_level = "info";
  app.add_option("--seed", seed, "Seed for every random stream");
  app.add_option("--threads", threads, "OpenMP threads (0 = runtime default)")->check(CLI::NonNegativeNumber);
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  // generate-synthetic
  auto* gen = app.add_subcommand("generate-synthetic", "Write the parametric shape dataset");
  SyntheticSpec synth;
  std::string gen_out;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--classes", synth.num_classes, "Number of shape classes");
  gen->add_option("--per-class", synth.images_per_class, "Images per class");
  gen->add_option("--height", synth.height, "Image height");
  gen->add_option("--width", synth.width, "Image width");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Convert a VIA annotation export into a manifest");
  std::string ing_annotations, ing_images, ing_taxonomy, ing_out, ing_attribute = "class";
  ingest->add_option("--annotations", ing_annotations, "VIA JSON export")->required()->check(CLI::ExistingFile);
  ingest->add_option("--images", ing_images, "Directory holding the images")->required()->check(CLI::ExistingDirectory);
  ingest->add_option("--taxonomy", ing_taxonomy, "Class names, one per line (default: neurosurgical set)")
      ->check(CLI::ExistingFile);
  ingest->add_option("--class-attribute", ing_attribute, "Attribute holding the class name");
  ingest->add_option("--out", ing_out, "Manifest to write")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "Train one model on every image of a manifest");
  std::string tr_manifest, tr_out, tr_loss;
  RunFlags tr_flags;
  train_cmd->add_option("--manifest", tr_manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out", tr_out, "Checkpoint to write")->required();
  train_cmd->add_option("--loss-out", tr_loss, "Loss curve file (default: <out>.loss.tsv)");
  add_run_flags(train_cmd, tr_flags);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on every image of a manifest");
  std::string ev_manifest, ev_ckpt, ev_out;
  double ev_tau = 0.5;
  eval_cmd->add_option("--manifest", ev_manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--checkpoint", ev_ckpt, "Model checkpoint")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--tau", ev_tau, "Probability threshold");
  eval_cmd->add_option("--out", ev_out, "Per-image records file");

  // crossval
  auto* cv = app.add_subcommand("crossval", "k-fold train/test run with per-class report");
  std::string cv_manifest, cv_run_dir, cv_mode = "stratified";
  double cv_tau = 0.5;
  int cv_folds = 5;
  RunFlags cv_flags;
  cv->add_option("--manifest", cv_manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  cv->add_option("--run-dir", cv_run_dir, "Output directory")->required();
  cv->add_option("--tau", cv_tau, "Probability threshold");
  cv->add_option("--folds", cv_folds, "Number of folds");
  cv->add_option("--fold-mode", cv_mode, "stratified or random")->check(CLI::IsMember({"stratified", "random"}));
  add_run_flags(cv, cv_flags);

  // heatmap
  auto* hm = app.add_subcommand("heatmap", "Render per-class confidence heatmaps");
  std::string hm_ckpt, hm_class = "predicted", hm_out, hm_taxonomy;
  std::vector<std::string> hm_images;
  double hm_alpha = kDefaultHeatmapAlpha, hm_tau = 0.5;
  hm->add_option("--checkpoint", hm_ckpt, "Model checkpoint")->required()->check(CLI::ExistingFile);
  hm->add_option("--image", hm_images, "Input image(s)")->required()->check(CLI::ExistingFile);
  hm->add_option("--class", hm_class, "Class name, 'predicted' or 'max'");
  hm->add_option("--out", hm_out, "PNG path, or directory for <image_id>_<class>.png files")->required();
  hm->add_option("--alpha", hm_alpha, "Heatmap weight over the image");
  hm->add_option("--tau", hm_tau, "Threshold for the 'predicted' class decision");
  hm->add_option("--taxonomy", hm_taxonomy, "Class names, when the checkpoint carries none")
      ->check(CLI::ExistingFile);

  // report
  auto* rep = app.add_subcommand("report", "Aggregate a records file into the per-class table");
  std::string rep_records, rep_manifest, rep_taxonomy, rep_format = "csv", rep_out;
  int rep_folds = 0;
  rep->add_option("--records", rep_records, "Per-image records file")->required()->check(CLI::ExistingFile);
  rep->add_option("--manifest", rep_manifest, "Manifest supplying the class names")->check(CLI::ExistingFile);
  rep->add_option("--taxonomy", rep_taxonomy, "Class names, one per line")->check(CLI::ExistingFile);
  rep->add_option("--folds", rep_folds, "Number of folds (default: from the records)");
  rep->add_option("--format", rep_format, "csv or md")->check(CLI::IsMember({"csv", "md"}));
  rep->add_option("--out", rep_out, "Output file (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    setup_logging(log_level);
    if (threads > 0) omp_set_num_threads(threads);

    if (*gen) {
      synth.seed = seed;
      Dataset ds = generate_synthetic_dataset(synth, gen_out);
      print_counts(ds);
      return kExitOk;
    }

    if (*ingest) {
      const ClassTaxonomy taxonomy =
          ing_taxonomy.empty() ? ClassTaxonomy::neurosurgical() : ClassTaxonomy::from_file(ing_taxonomy);
      ViaParseOptions opts;
      opts.class_attribute = ing_attribute;
      opts.image_root = fs::absolute(ing_images).string();
      Dataset ds{taxonomy, parse_via_annotations(read_text_file(ing_annotations), taxonomy, opts)};
      if (ds.images.empty()) throw DataError(ing_annotations + ": no annotated images");
      write_manifest(ing_out, ds);
      print_counts(ds);
      return kExitOk;
    }

    if (*train_cmd) {
      Dataset ds = load_dataset(tr_manifest);
      ResolvedRun run = resolve_run(tr_flags, ds.taxonomy);
      run.model.init_seed = derive_seed(seed, 100);
      run.train.seed = derive_seed(seed, 200);
      if (run.train.checkpoint_every > 0) run.train.checkpoint_dir = tr_out + ".checkpoints";
      const std::string loss_path = tr_loss.empty() ? tr_out + ".loss.tsv" : tr_loss;

      UNet model(run.model);
      const auto samples =
          load_samples(ds.images, ImageSize{run.model.height, run.model.width}, ds.taxonomy.background_id());
      const TrainResult result = train(model, samples, run.train, log_progress(run.train.total_iters));
      Checkpoint ckpt = make_checkpoint(model);
      set_taxonomy_metadata(ckpt, ds.taxonomy);
      save_checkpoint(tr_out, ckpt);
      write_file_atomic(loss_path, format_loss_curve(result.loss_curve));
      std::printf("final loss\t%.6f\n", result.loss_curve.back());
      return kExitOk;
    }

    if (*eval_cmd) {
      const Threshold tau(ev_tau);
      Dataset ds = load_dataset(ev_manifest);
      const Checkpoint ckpt = load_checkpoint(ev_ckpt);
      const UNet model = model_from_checkpoint(ckpt);
      if (model.config().num_classes != ds.taxonomy.num_channels()) {
        throw DataError(ev_ckpt + ": checkpoint predicts " + std::to_string(model.config().num_classes) +
                        " channels but the manifest taxonomy has " + std::to_string(ds.taxonomy.num_channels()));
      }
      const auto samples = load_samples(ds.images, ImageSize{model.config().height, model.config().width},
                                        ds.taxonomy.background_id());
      std::vector<EvalRecord> records;
      constexpr std::size_t kChunk = 8;
      for (std::size_t start = 0; start < samples.size(); start += kChunk) {
        const std::size_t count = std::min(kChunk, samples.size() - start);
        std::vector<Image> images;
        for (std::size_t j = 0; j < count; ++j) images.push_back(samples[start + j].image);
        const auto maps = predict(model, images);
        for (std::size_t j = 0; j < count; ++j) {
          const auto& s = samples[start + j];
          records.push_back(
              evaluate_prediction(s.image_id, maps[j], s.mask, ds.images[start + j].truth_class, ds.taxonomy, tau));
        }
      }
      if (!ev_out.empty()) write_file_atomic(ev_out, format_records(records, ds.taxonomy, tau));
      std::fputs(emit_report(aggregate_reports(records, ds.taxonomy, 1), ReportFormat::kMarkdown, ev_tau).c_str(),
                 stdout);
      std::printf("pooled accuracy\t%.4f\n", pooled_accuracy(records));
      return kExitOk;
    }

    if (*cv) {
      // Everything is validated before the run directory is created.
      const Threshold tau(cv_tau);
      if (cv_folds < 2) throw ConfigError("--folds must be at least 2");
      Dataset ds = load_dataset(cv_manifest);
      const ResolvedRun run = resolve_run(cv_flags, ds.taxonomy);
      const FoldMode mode = cv_mode == "random" ? FoldMode::kRandom : FoldMode::kStratified;
      make_folds(ds.images, cv_folds, derive_seed(seed, 0), mode);

      fs::create_directories(cv_run_dir);
      write_file_atomic((fs::path(cv_run_dir) / "config.toml").string(),
                        config_snapshot(seed, cv_manifest, cv_run_dir, cv_flags, run, tau.value(), cv_folds, cv_mode));
      CrossvalOptions opts;
      opts.model = run.model;
      opts.train = run.train;
      opts.tau = tau.value();
      opts.folds = cv_folds;
      opts.fold_mode = mode;
      opts.seed = seed;
      opts.run_dir = cv_run_dir;
      opts.progress = log_progress(run.train.total_iters);
      const CrossvalResult result = run_crossval(ds, opts);
      std::fputs(emit_report(result.reports, ReportFormat::kMarkdown, tau.value()).c_str(), stdout);
      std::printf("pooled accuracy\t%.4f\n", pooled_accuracy(result.records));
      return kExitOk;
    }

    if (*hm) {
      const Threshold tau(hm_tau);
      if (!(hm_alpha >= 0.0 && hm_alpha <= 1.0)) throw ConfigError("--alpha must lie in [0,1]");
      const bool to_dir = hm_images.size() > 1 || fs::is_directory(hm_out) || hm_out.ends_with('/');
      const Checkpoint ckpt = load_checkpoint(hm_ckpt);
      std::optional<ClassTaxonomy> taxonomy =
          hm_taxonomy.empty() ? taxonomy_from_checkpoint(ckpt) : ClassTaxonomy::from_file(hm_taxonomy);
      if (!taxonomy) throw ConfigError(hm_ckpt + ": checkpoint has no class names; pass --taxonomy");
      const UNet model = model_from_checkpoint(ckpt);
      if (model.config().num_classes != taxonomy->num_channels()) {
        throw DataError(hm_ckpt + ": checkpoint predicts " + std::to_string(model.config().num_classes) +
                        " channels but the taxonomy has " + std::to_string(taxonomy->num_channels()));
      }
      HeatmapSelector selector = HeatmapSelector::kClass;
      ClassId class_id = 0;
      if (hm_class == "predicted") {
        selector = HeatmapSelector::kPredicted;
      } else if (hm_class == "max") {
        selector = HeatmapSelector::kMax;
      } else {
        const auto found = taxonomy->find(hm_class);
        if (!found) throw ConfigError("unknown class '" + hm_class + "'");
        class_id = *found;
      }

      const ImageSize dims{model.config().height, model.config().width};
      std::vector<Image> bases;
      for (const auto& path : hm_images) bases.push_back(load_and_preprocess(path, dims));
      const auto maps = predict(model, bases);
      std::vector<std::pair<std::string, std::vector<std::uint8_t>>> outputs;
      for (std::size_t i = 0; i < bases.size(); ++i) {
        const HeatmapChoice choice = select_heatmap_channel(maps[i], *taxonomy, selector, class_id, tau);
        const Image rendered = render_heatmap(choice.rendered, 0, bases[i], hm_alpha);
        const std::string path =
            to_dir ? (fs::path(hm_out) / heatmap_filename(fs::path(hm_images[i]).stem().string(),
                                                          taxonomy->name(choice.class_id)))
                         .string()
                   : hm_out;
        outputs.emplace_back(path, encode_png(to_rgb8(rendered)));
      }
      if (to_dir) fs::create_directories(hm_out);
      for (const auto& [path, png] : outputs) {
        write_file_atomic(path, png);
        std::printf("%s\n", path.c_str());
      }
      return kExitOk;
    }

    if (*rep) {
      if (rep_manifest.empty() == rep_taxonomy.empty()) {
        throw ConfigError("report needs exactly one of --manifest or --taxonomy");
      }
      const ClassTaxonomy taxonomy =
          rep_manifest.empty() ? ClassTaxonomy::from_file(rep_taxonomy) : read_manifest(rep_manifest).taxonomy;
      double tau = 0.0;
      const auto records = parse_records(read_text_file(rep_records), taxonomy, &tau);
      int folds = rep_folds;
      if (folds <= 0) {
        for (const auto& r : records) folds = std::max(folds, r.fold_index + 1);
      }
      const std::string text = emit_report(aggregate_reports(records, taxonomy, folds),
                                           rep_format == "md" ? ReportFormat::kMarkdown : ReportFormat::kCsv, tau);
      if (rep_out.empty()) {
        std::fputs(text.c_str(), stdout);
      } else {
        write_file_atomic(rep_out, text);
      }
      return kExitOk;
    }
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return exit_code_for(e);
  }
  return kExitConfig;
}

}  // namespace surgseg
