#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "surgseg/annotations.hpp"
#include "surgseg/preprocess.hpp"
#include "surgseg/unet.hpp"

namespace surgseg {

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  double lr0 = 0.001;
  int total_iters = 15000;
  int batch_size = 128;
  AdamHyper adam;
  std::uint64_t seed = 0;
  /// Global L2 gradient-norm clip; 0 disables.
  double clip_grad_norm = 0.0;
  AugmentParams augment;
  /// Write a checkpoint every N iterations into checkpoint_dir (0 = never).
  int checkpoint_every = 0;
  std::string checkpoint_dir;

  /// Throws ConfigError on out-of-range values.
  void validate() const;

  /// 15000 iterations at batch 128.
  static TrainConfig full();
  /// Small budget sized for CPU runs on the synthetic dataset.
  static TrainConfig desk();
};

template <typename Real>
struct AdamState {
  std::vector<Real> m;
  std::vector<Real> v;
  long long t = 0;

  AdamState() = default;
  explicit AdamState(std::size_t n) : m(n, Real(0)), v(n, Real(0)) {}
};

/// lr0 * (1 - iteration / (total_iters - 1)): exactly lr0 at the first
/// iteration and 0 at the last. A one-iteration budget runs at lr0.
/// Throws ConfigError for iterations outside [0, total_iters).
double lr_at(int iteration, const TrainConfig& config);

/// Mean over every (batch, channel, pixel) entry of (pred - target)^2.
/// When `grad` is given it receives dLoss/dPred. Throws ShapeError on
/// mismatched dims.
template <typename Real>
Real mse_onehot_loss(const Tensor4<Real>& pred, const Tensor4<Real>& target, Tensor4<Real>* grad = nullptr);

double mse_onehot_loss(std::span<const ProbabilityMap> pred, std::span<const OneHotMask> target);

/// One bias-corrected Adam update; increments state.t first. Throws
/// TrainingError naming the parameter if a gradient is not finite (names
/// resolved through `names` when provided).
template <typename Real>
void adam_step(std::span<Real> params, std::span<const Real> grads, AdamState<Real>& state, double lr,
               const AdamHyper& hyper, std::span<const ParamTensor> names = {});

/// Image and label mask at working resolution.
struct TrainingSample {
  std::string image_id;
  Image image;
  LabelMask mask;
};

/// Decodes, preprocesses and rasterizes every image (in parallel).
std::vector<TrainingSample> load_samples(std::span<const AnnotatedImage> images, ImageSize dims,
                                         ClassId background_id);

struct TrainResult {
  std::vector<double> loss_curve;
};

using ProgressFn = std::function<void(int iteration, double loss)>;

/// Runs config.total_iters Adam steps. Each step draws batch_size samples
/// uniformly with replacement, augments them, and minimizes the MSE
/// between the softmax output and one-hot labels at lr_at(iteration).
/// Deterministic for a given seed. Throws ConfigError on an empty sample
/// set and TrainingError (with iteration index) on a non-finite loss.
TrainResult train(UNet& model, std::span<const TrainingSample> samples, const TrainConfig& config,
                  const ProgressFn& progress = {});

/// Loads the split at the model's resolution, then trains.
TrainResult train(UNet& model, std::span<const AnnotatedImage> split, ClassId background_id,
                  const TrainConfig& config, const ProgressFn& progress = {});

/// "iteration<TAB>loss" lines.
std::string format_loss_curve(const std::vector<double>& curve);

}  // namespace surgseg
