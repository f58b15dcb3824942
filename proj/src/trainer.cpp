#include "surgseg/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>

#include <spdlog/spdlog.h>

#include "surgseg/checkpoint.hpp"
#include "surgseg/errors.hpp"
#include "surgseg/raster.hpp"

namespace surgseg {

void TrainConfig::validate() const {
  if (!(lr0 > 0.0) || !std::isfinite(lr0)) throw ConfigError("lr0 must be positive");
  if (total_iters < 1) throw ConfigError("total_iters must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0)) throw ConfigError("beta1 must lie in [0, 1)");
  if (!(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) throw ConfigError("beta2 must lie in [0, 1)");
  if (!(adam.epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (clip_grad_norm < 0.0) throw ConfigError("clip_grad_norm must be >= 0");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  if (checkpoint_every > 0 && checkpoint_dir.empty()) throw ConfigError("checkpoint_every needs checkpoint_dir");
  surgseg::validate(augment);
}

TrainConfig TrainConfig::full() {
  TrainConfig c;
  c.lr0 = 0.001;
  c.total_iters = 15000;
  c.batch_size = 128;
  return c;
}

TrainConfig TrainConfig::desk() {
  TrainConfig c;
  c.lr0 = 0.001;
  c.total_iters = 2000;
  c.batch_size = 8;
  c.augment = {0.7, 1.0};
  return c;
}

double lr_at(int iteration, const TrainConfig& config) {
  if (iteration < 0 || iteration >= config.total_iters) {
    throw ConfigError("iteration " + std::to_string(iteration) + " outside [0, " + std::to_string(config.total_iters) +
                      ")");
  }
  if (config.total_iters == 1) return config.lr0;
  if (iteration == config.total_iters - 1) return 0.0;
  return config.lr0 * (1.0 - static_cast<double>(iteration) / (config.total_iters - 1));
}

template <typename Real>
Real mse_onehot_loss(const Tensor4<Real>& pred, const Tensor4<Real>& target, Tensor4<Real>* grad) {
  if (!pred.same_shape(target)) throw ShapeError("mse_onehot_loss: prediction and target dims differ");
  const std::size_t n = pred.size();
  if (n == 0) throw ShapeError("mse_onehot_loss: empty tensors");
  if (grad) grad->resize(pred.n, pred.c, pred.h, pred.w);
  const double scale = 2.0 / static_cast<double>(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(pred.data[i]) - static_cast<double>(target.data[i]);
    sum += d * d;
    if (grad) grad->data[i] = static_cast<Real>(scale * d);
  }
  return static_cast<Real>(sum / static_cast<double>(n));
}

double mse_onehot_loss(std::span<const ProbabilityMap> pred, std::span<const OneHotMask> target) {
  if (pred.size() != target.size()) throw ShapeError("mse_onehot_loss: batch sizes differ");
  return static_cast<double>(mse_onehot_loss(maps_to_tensor<double>(pred), maps_to_tensor<double>(target)));
}

template <typename Real>
void adam_step(std::span<Real> params, std::span<const Real> grads, AdamState<Real>& state, double lr,
               const AdamHyper& hyper, std::span<const ParamTensor> names) {
  const std::size_t n = params.size();
  if (grads.size() != n || state.m.size() != n || state.v.size() != n) {
    throw ShapeError("adam_step: parameter, gradient and state sizes differ");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(static_cast<double>(grads[i]))) {
      std::string name = "#" + std::to_string(i);
      for (const ParamTensor& p : names) {
        if (i >= p.offset && i < p.offset + p.size) {
          name = p.name + "[" + std::to_string(i - p.offset) + "]";
          break;
        }
      }
      throw TrainingError("non-finite gradient for parameter " + name);
    }
  }
  state.t += 1;
  const double b1 = hyper.beta1;
  const double b2 = hyper.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  const double eps = hyper.epsilon;
  const std::ptrdiff_t count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    const double g = static_cast<double>(grads[i]);
    const double m = b1 * static_cast<double>(state.m[i]) + (1.0 - b1) * g;
    const double v = b2 * static_cast<double>(state.v[i]) + (1.0 - b2) * g * g;
    state.m[i] = static_cast<Real>(m);
    state.v[i] = static_cast<Real>(v);
    const double m_hat = m / bc1;
    const double v_hat = v / bc2;
    params[i] = static_cast<Real>(static_cast<double>(params[i]) - lr * m_hat / (std::sqrt(v_hat) + eps));
  }
}

template float mse_onehot_loss<float>(const Tensor4<float>&, const Tensor4<float>&, Tensor4<float>*);
template double mse_onehot_loss<double>(const Tensor4<double>&, const Tensor4<double>&, Tensor4<double>*);
template void adam_step<float>(std::span<float>, std::span<const float>, AdamState<float>&, double, const AdamHyper&,
                               std::span<const ParamTensor>);
template void adam_step<double>(std::span<double>, std::span<const double>, AdamState<double>&, double,
                                const AdamHyper&, std::span<const ParamTensor>);

std::vector<TrainingSample> load_samples(std::span<const AnnotatedImage> images, ImageSize dims,
                                         ClassId background_id) {
  std::vector<TrainingSample> samples(images.size());
  std::vector<std::string> errors(images.size());
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(images.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      samples[i] = {images[i].image_id, load_and_preprocess(images[i].path, dims),
                    rasterize_mask(images[i], dims, background_id)};
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw DataError(e);
  }
  return samples;
}

namespace {

void clip_gradients(std::span<float> grads, double max_norm) {
  double sq = 0.0;
  for (float g : grads) sq += static_cast<double>(g) * g;
  const double norm = std::sqrt(sq);
  if (norm <= max_norm || norm == 0.0) return;
  const float scale = static_cast<float>(max_norm / norm);
  for (float& g : grads) g *= scale;
}

}  // namespace

TrainResult train(UNet& model, std::span<const TrainingSample> samples, const TrainConfig& config,
                  const ProgressFn& progress) {
  config.validate();
  if (samples.empty()) throw ConfigError("training split is empty");
  const UNetConfig& mc = model.config();
  for (const auto& s : samples) {
    if (s.image.height != mc.height || s.image.width != mc.width) {
      throw ShapeError("sample " + s.image_id + " is not at the model resolution");
    }
  }
  if (config.checkpoint_every > 0) std::filesystem::create_directories(config.checkpoint_dir);

  AdamState<float> state(model.parameter_count());
  std::mt19937_64 picker(config.seed);
  std::uniform_int_distribution<std::size_t> pick(0, samples.size() - 1);
  const int batch = config.batch_size;
  std::vector<std::size_t> chosen(static_cast<std::size_t>(batch));
  std::vector<Image> images(static_cast<std::size_t>(batch));
  std::vector<ClassMap> targets(static_cast<std::size_t>(batch));
  TrainResult result;
  result.loss_curve.reserve(static_cast<std::size_t>(config.total_iters));
  Tensor4<float> grad;

  for (int it = 0; it < config.total_iters; ++it) {
    for (auto& c : chosen) c = pick(picker);
#pragma omp parallel for schedule(static)
    for (int slot = 0; slot < batch; ++slot) {
      // Each slot gets its own stream so assembly order cannot leak into
      // the result.
      std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                        static_cast<std::uint32_t>(it), static_cast<std::uint32_t>(slot)};
      std::mt19937_64 rng(seq);
      const TrainingSample& s = samples[chosen[static_cast<std::size_t>(slot)]];
      auto [img, mask] = augment(s.image, s.mask, rng, config.augment);
      images[static_cast<std::size_t>(slot)] = std::move(img);
      targets[static_cast<std::size_t>(slot)] = one_hot(mask, mc.num_classes);
    }
    const Tensor4<float> input = images_to_tensor<float>(images);
    const Tensor4<float> target = maps_to_tensor<float>(targets);
    model.zero_grad();
    const Tensor4<float>& probs = model.forward_train(input);
    const double loss = mse_onehot_loss(probs, target, &grad);
    if (!std::isfinite(loss)) throw TrainingError("non-finite loss at iteration " + std::to_string(it));
    model.backward(grad);
    if (config.clip_grad_norm > 0.0) clip_gradients(model.gradients(), config.clip_grad_norm);
    adam_step<float>(model.parameters(), model.gradients(), state, lr_at(it, config), config.adam,
                     model.parameter_tensors());
    result.loss_curve.push_back(loss);
    if (progress) progress(it, loss);
    if (config.checkpoint_every > 0 && ((it + 1) % config.checkpoint_every == 0 || it + 1 == config.total_iters)) {
      const auto path = std::filesystem::path(config.checkpoint_dir) / ("iter_" + std::to_string(it + 1) + ".ckpt");
      save_checkpoint(path.string(), make_checkpoint(model));
    }
  }
  return result;
}

TrainResult train(UNet& model, std::span<const AnnotatedImage> split, ClassId background_id,
                  const TrainConfig& config, const ProgressFn& progress) {
  config.validate();
  if (split.empty()) throw ConfigError("training split is empty");
  const auto samples = load_samples(split, {model.config().height, model.config().width}, background_id);
  return train(model, samples, config, progress);
}

std::string format_loss_curve(const std::vector<double>& curve) {
  std::ostringstream out;
  out.precision(9);
  for (std::size_t i = 0; i < curve.size(); ++i) out << i << '\t' << curve[i] << '\n';
  return out.str();
}

}  // namespace surgseg
