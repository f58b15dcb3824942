#include <filesystem>
#include <memory>

#include <spdlog/spdlog.h>

#include "surgseg/checkpoint.hpp"
#include "surgseg/errors.hpp"
#include "surgseg/experiment.hpp"
#include "surgseg/fileutil.hpp"

namespace surgseg {
namespace {

constexpr std::size_t kEvalChunk = 8;

std::vector<TrainingSample> gather(const std::vector<TrainingSample>& all, const std::vector<std::size_t>& idx) {
  std::vector<TrainingSample> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(all[i]);
  return out;
}

Predictor model_predictor(std::shared_ptr<const UNet> model) {
  return [model](std::span<const TrainingSample> batch) {
    std::vector<Image> images;
    images.reserve(batch.size());
    for (const auto& s : batch) images.push_back(s.image);
    return predict(*model, images);
  };
}

}  // namespace

CrossvalResult run_crossval(const Dataset& dataset, const CrossvalOptions& options) {
  const ClassTaxonomy& taxonomy = dataset.taxonomy;
  const Threshold tau(options.tau);
  UNetConfig model_config = options.model;
  model_config.num_classes = taxonomy.num_channels();
  model_config.validate();
  options.train.validate();
  if (dataset.images.empty()) throw ConfigError("dataset is empty");

  CrossvalResult result;
  result.folds = make_folds(dataset.images, options.folds, derive_seed(options.seed, 0), options.fold_mode);
  const ImageSize dims{model_config.height, model_config.width};
  const auto samples = load_samples(dataset.images, dims, taxonomy.background_id());

  namespace fs = std::filesystem;
  const bool write = !options.run_dir.empty();
  if (write) fs::create_directories(options.run_dir);

  for (const FoldSplit& fold : result.folds) {
    const int f = fold.fold_index;
    const auto train_samples = gather(samples, fold.train_indices);
    const auto test_samples = gather(samples, fold.test_indices);
    const fs::path fold_dir = write ? fs::path(options.run_dir) / ("fold_" + std::to_string(f)) : fs::path();
    if (write) fs::create_directories(fold_dir);

    Predictor predictor;
    if (options.predictor_factory) {
      predictor = options.predictor_factory(f, train_samples);
    } else {
      UNetConfig mc = model_config;
      mc.init_seed = derive_seed(options.seed, 100 + static_cast<std::uint64_t>(f));
      auto model = std::make_shared<UNet>(mc);
      TrainConfig tc = options.train;
      tc.seed = derive_seed(options.seed, 200 + static_cast<std::uint64_t>(f));
      if (write && tc.checkpoint_every > 0) tc.checkpoint_dir = (fold_dir / "checkpoints").string();
      spdlog::info("fold {}: training on {} images, testing on {}", f, train_samples.size(), test_samples.size());
      TrainResult tr = train(*model, train_samples, tc, options.progress);
      if (write) {
        write_file_atomic((fold_dir / "loss.tsv").string(), format_loss_curve(tr.loss_curve));
        Checkpoint ckpt = make_checkpoint(*model);
        set_taxonomy_metadata(ckpt, taxonomy);
        save_checkpoint((fold_dir / "model.ckpt").string(), ckpt);
      }
      result.loss_curves.push_back(std::move(tr.loss_curve));
      predictor = model_predictor(model);
    }

    for (std::size_t start = 0; start < test_samples.size(); start += kEvalChunk) {
      const std::size_t count = std::min(kEvalChunk, test_samples.size() - start);
      const std::span<const TrainingSample> chunk(test_samples.data() + start, count);
      const auto maps = predictor(chunk);
      if (maps.size() != count) throw ShapeError("predictor returned the wrong number of maps");
      for (std::size_t j = 0; j < count; ++j) {
        const std::size_t dataset_index = fold.test_indices[start + j];
        EvalRecord rec = evaluate_prediction(chunk[j].image_id, maps[j], chunk[j].mask,
                                             dataset.images[dataset_index].truth_class, taxonomy, tau);
        rec.fold_index = f;
        result.records.push_back(std::move(rec));
      }
    }
  }

  result.reports = aggregate_reports(result.records, taxonomy, options.folds);
  if (write) {
    const fs::path dir(options.run_dir);
    write_file_atomic((dir / "records.tsv").string(), format_records(result.records, taxonomy, tau));
    write_file_atomic((dir / "report.csv").string(), emit_report(result.reports, ReportFormat::kCsv, options.tau));
    write_file_atomic((dir / "report.md").string(), emit_report(result.reports, ReportFormat::kMarkdown, options.tau));
  }
  return result;
}

}  // namespace surgseg
