#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "surgseg/evaluator.hpp"
#include "surgseg/manifest.hpp"
#include "surgseg/trainer.hpp"
#include "surgseg/unet.hpp"

namespace surgseg {

struct FoldSplit {
  int fold_index = 0;
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
  /// Positions in the dataset, ascending.
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> test_indices;
};

enum class FoldMode { kStratified, kRandom };

/// k mutually exclusive test sets covering the dataset, each of size
/// floor(N/k) or ceil(N/k). Stratified mode shuffles each class with the
/// seed and deals the concatenated class lists round-robin, so every class
/// also splits as evenly as its count allows. Random mode cuts one seeded
/// permutation into contiguous blocks. Throws ConfigError if N < k or
/// image ids repeat.
std::vector<FoldSplit> make_folds(std::span<const AnnotatedImage> images, int k, std::uint64_t seed,
                                  FoldMode mode = FoldMode::kStratified);

struct ClassReport {
  std::string class_name;
  int sample_size = 0;
  double accuracy_mean = 0.0;  // percent
  double accuracy_sd = 0.0;    // percent, population SD across folds
  double iou_mean = 0.0;
  double iou_sd = 0.0;
  int folds_used = 0;
};

/// Mean and population standard deviation.
std::pair<double, double> mean_and_population_sd(std::span<const double> values);

/// Per class: accuracy and mean IoU within each fold, then mean and
/// population SD across the folds that contain the class. Folds without
/// test images of a class are skipped (logged). Classes with no records are
/// omitted. Rows follow taxonomy order.
std::vector<ClassReport> aggregate_reports(const std::vector<EvalRecord>& records, const ClassTaxonomy& taxonomy,
                                           int num_folds);

/// Fraction of records classified correctly.
double pooled_accuracy(const std::vector<EvalRecord>& records);

enum class ReportFormat { kCsv, kMarkdown };

/// Columns Instrument | Sample Size | Accuracy (mean ± SD) | IoU (mean ± SD),
/// rows sorted by class name; percentages to two decimals, IoU to four.
/// When tau is given it is recorded (a '#' comment line in CSV, a footer
/// in Markdown). Throws ConfigError on an empty list.
std::string emit_report(const std::vector<ClassReport>& reports, ReportFormat format,
                        std::optional<double> tau = std::nullopt);

/// Reads emit_report CSV back ('#' lines skipped).
std::vector<ClassReport> parse_report_csv(const std::string& text);

/// Produces probability maps for a batch of samples.
using Predictor = std::function<std::vector<ProbabilityMap>(std::span<const TrainingSample>)>;
/// Builds the predictor for one fold from its training samples.
using PredictorFactory = std::function<Predictor(int fold, std::span<const TrainingSample> train)>;

struct CrossvalOptions {
  UNetConfig model;  // num_classes is taken from the taxonomy
  TrainConfig train;
  double tau = 0.5;
  int folds = 5;
  FoldMode fold_mode = FoldMode::kStratified;
  std::uint64_t seed = 0;
  /// When set, per-fold checkpoints and loss curves plus records.tsv,
  /// report.csv and report.md are written here.
  std::string run_dir;
  /// Replaces U-Net training (used for oracle and degenerate predictors).
  PredictorFactory predictor_factory;
  ProgressFn progress;
};

struct CrossvalResult {
  std::vector<FoldSplit> folds;
  std::vector<EvalRecord> records;
  std::vector<ClassReport> reports;
  std::vector<std::vector<double>> loss_curves;
};

/// For each fold: fresh model (seeded per fold), train on the train split,
/// evaluate every test image. Records are ordered by fold, then dataset
/// order. Fully deterministic for a fixed seed.
CrossvalResult run_crossval(const Dataset& dataset, const CrossvalOptions& options);

/// Seed for a sub-stream (fold, purpose) derived from the run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace surgseg
