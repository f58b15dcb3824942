#include "surgseg/unet.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "surgseg/errors.hpp"

namespace surgseg {

void UNetConfig::validate() const {
  if (depth < 1 || depth > 8) throw ConfigError("U-Net depth must be in [1, 8]");
  if (base_channels < 1) throw ConfigError("U-Net base_channels must be positive");
  if (num_classes < 2) throw ConfigError("U-Net needs at least 2 classes");
  const int factor = 1 << depth;
  if (height <= 0 || width <= 0 || height % factor != 0 || width % factor != 0) {
    throw ConfigError("input " + std::to_string(height) + "x" + std::to_string(width) + " is not divisible by 2^" +
                      std::to_string(depth));
  }
}

UNetConfig UNetConfig::full() { return UNetConfig{}; }

UNetConfig UNetConfig::desk() {
  UNetConfig c;
  c.height = 32;
  c.width = 32;
  c.depth = 3;
  c.base_channels = 8;
  return c;
}

std::size_t LayerSpec::param_count() const {
  const std::size_t conv = static_cast<std::size_t>(kernel) * kernel * in_channels * out_channels + out_channels;
  return conv + (batch_norm ? 2u * static_cast<std::size_t>(out_channels) : 0u);
}

template <typename Real>
BasicUNet<Real>::BasicUNet(const UNetConfig& config) : config_(config) {
  config_.validate();
  build_layers();

  // He-normal fan-in scaling for ReLU layers; the softmax head uses unit
  // fan-in variance. Draws happen in double so float and double models
  // built from the same seed agree.
  std::mt19937_64 rng(config_.init_seed);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const LayerSpec& spec = layers_[l];
    const double fan_in = static_cast<double>(spec.kernel) * spec.kernel * spec.in_channels;
    const double gain = spec.name == "head" ? 1.0 : 2.0;
    std::normal_distribution<double> dist(0.0, std::sqrt(gain / fan_in));
    const std::size_t n = static_cast<std::size_t>(spec.kernel) * spec.kernel * spec.in_channels * spec.out_channels;
    for (std::size_t i = 0; i < n; ++i) params_[slots_[l].weight + i] = static_cast<Real>(dist(rng));
    if (spec.batch_norm) {
      std::fill_n(params_.begin() + static_cast<std::ptrdiff_t>(slots_[l].gamma), spec.out_channels, Real(1));
      std::fill_n(buffers_.begin() + static_cast<std::ptrdiff_t>(slots_[l].var), spec.out_channels, Real(1));
    }
  }
}

template <typename Real>
void BasicUNet<Real>::build_layers() {
  const int d = config_.depth;
  const int b = config_.base_channels;
  const bool bn = config_.batch_norm;
  auto ch = [b](int stage) { return b << stage; };
  auto add = [&](std::string name, int k, int in, int out, LayerPart part, bool norm) {
    layers_.push_back({std::move(name), k, in, out, part, norm});
  };
  for (int s = 0; s < d; ++s) {
    add("enc" + std::to_string(s) + ".conv1", 3, s == 0 ? 3 : ch(s - 1), ch(s), LayerPart::kEncoder, bn);
    add("enc" + std::to_string(s) + ".conv2", 3, ch(s), ch(s), LayerPart::kEncoder, bn);
  }
  add("bottleneck.conv1", 3, ch(d - 1), ch(d), LayerPart::kEncoder, bn);
  add("bottleneck.conv2", 3, ch(d), ch(d), LayerPart::kEncoder, bn);
  for (int s = d - 1; s >= 0; --s) {
    add("dec" + std::to_string(s) + ".up", 3, ch(s + 1), ch(s), LayerPart::kDecoder, bn);
    add("dec" + std::to_string(s) + ".conv1", 3, 2 * ch(s), ch(s), LayerPart::kDecoder, bn);
    add("dec" + std::to_string(s) + ".conv2", 3, ch(s), ch(s), LayerPart::kDecoder, bn);
  }
  add("head", 1, ch(0), config_.num_classes, LayerPart::kDecoder, false);

  std::size_t offset = 0;
  std::size_t buffer_offset = 0;
  auto push = [&](std::vector<ParamTensor>& list, std::size_t& cursor, const std::string& name,
                  std::vector<int> shape, LayerPart part) {
    std::size_t size = 1;
    for (int s : shape) size *= static_cast<std::size_t>(s);
    list.push_back({name, std::move(shape), cursor, size, part});
    const std::size_t at = cursor;
    cursor += size;
    return at;
  };
  for (const LayerSpec& spec : layers_) {
    LayerSlots slot;
    slot.weight = push(param_tensors_, offset, spec.name + ".weight",
                       {spec.out_channels, spec.in_channels, spec.kernel, spec.kernel}, spec.part);
    slot.bias = push(param_tensors_, offset, spec.name + ".bias", {spec.out_channels}, spec.part);
    if (spec.batch_norm) {
      slot.gamma = push(param_tensors_, offset, spec.name + ".bn.gamma", {spec.out_channels}, spec.part);
      slot.beta = push(param_tensors_, offset, spec.name + ".bn.beta", {spec.out_channels}, spec.part);
      slot.mean = push(buffer_tensors_, buffer_offset, spec.name + ".bn.running_mean", {spec.out_channels}, spec.part);
      slot.var = push(buffer_tensors_, buffer_offset, spec.name + ".bn.running_var", {spec.out_channels}, spec.part);
    }
    slots_.push_back(slot);
  }
  params_.assign(offset, Real(0));
  grads_.assign(offset, Real(0));
  buffers_.assign(buffer_offset, Real(0));
}

template <typename Real>
Tensor4<Real> BasicUNet<Real>::conv_unit(std::size_t layer, const Tensor4<Real>& in, Cache* cache,
                                         std::span<Real> running, std::vector<ShapeTrace>* trace) const {
  const LayerSpec& spec = layers_[layer];
  const LayerSlots& slot = slots_[layer];
  if (in.c != spec.in_channels) throw ShapeError("layer " + spec.name + ": channel mismatch");
  const std::span<const Real> p(params_);
  Tensor4<Real> out;
  kernels::conv2d_forward<Real>(in, p.subspan(slot.weight, static_cast<std::size_t>(spec.kernel) * spec.kernel *
                                                               spec.in_channels * spec.out_channels),
                                p.subspan(slot.bias, static_cast<std::size_t>(spec.out_channels)), spec.out_channels,
                                spec.kernel, out);
  if (out.h != in.h || out.w != in.w) throw ShapeError("layer " + spec.name + " changed spatial dims");
  if (trace) trace->push_back({spec.name, in.c, in.h, in.w, out.c, out.h, out.w});
  if (spec.kernel == 1) {
    if (cache) cache->conv_in[layer] = in;
    return out;
  }
  const std::size_t oc = static_cast<std::size_t>(spec.out_channels);
  if (spec.batch_norm) {
    Tensor4<Real> normed;
    const Real eps = Real(1e-5);
    if (cache && !running.empty()) {
      kernels::batchnorm_forward_train<Real>(out, p.subspan(slot.gamma, oc), p.subspan(slot.beta, oc), eps, Real(0.1),
                                             running.subspan(slot.mean, oc), running.subspan(slot.var, oc), normed,
                                             cache->bn[layer]);
    } else {
      const std::span<const Real> buf(buffers_);
      kernels::batchnorm_forward_eval<Real>(out, p.subspan(slot.gamma, oc), p.subspan(slot.beta, oc), eps,
                                            buf.subspan(slot.mean, oc), buf.subspan(slot.var, oc), normed);
    }
    out = std::move(normed);
  }
  kernels::relu_forward(out);
  if (cache) {
    cache->conv_in[layer] = in;
    cache->conv_out[layer] = out;
  }
  return out;
}

template <typename Real>
Tensor4<Real> BasicUNet<Real>::run_forward(const Tensor4<Real>& input, Cache* cache, std::span<Real> running,
                                           std::vector<ShapeTrace>* trace) const {
  if (input.c != 3 || input.h != config_.height || input.w != config_.width || input.n < 1) {
    throw ShapeError("U-Net expects input (N, 3, " + std::to_string(config_.height) + ", " +
                     std::to_string(config_.width) + "), got (" + std::to_string(input.n) + ", " +
                     std::to_string(input.c) + ", " + std::to_string(input.h) + ", " + std::to_string(input.w) + ")");
  }
  const int d = config_.depth;
  if (cache) {
    cache->conv_in.assign(layers_.size(), {});
    cache->conv_out.assign(layers_.size(), {});
    cache->bn.assign(layers_.size(), {});
    cache->pool_argmax.assign(static_cast<std::size_t>(d), {});
  }
  std::size_t layer = 0;
  std::vector<Tensor4<Real>> skips(static_cast<std::size_t>(d));
  Tensor4<Real> x = input;
  std::vector<int> argmax;
  for (int s = 0; s < d; ++s) {
    x = conv_unit(layer++, x, cache, running, trace);
    x = conv_unit(layer++, x, cache, running, trace);
    skips[static_cast<std::size_t>(s)] = x;
    Tensor4<Real> pooled;
    kernels::maxpool2_forward(x, pooled, argmax);
    if (cache) cache->pool_argmax[static_cast<std::size_t>(s)] = argmax;
    x = std::move(pooled);
  }
  x = conv_unit(layer++, x, cache, running, trace);
  x = conv_unit(layer++, x, cache, running, trace);
  for (int s = d - 1; s >= 0; --s) {
    Tensor4<Real> up;
    kernels::upsample2_forward(x, up);
    Tensor4<Real> a = conv_unit(layer++, up, cache, running, trace);
    const Tensor4<Real>& skip = skips[static_cast<std::size_t>(s)];
    Tensor4<Real> cat(a.n, skip.c + a.c, a.h, a.w);
    for (int ni = 0; ni < a.n; ++ni) {
      std::copy_n(skip.plane_ptr(ni, 0), skip.c * skip.plane(), cat.plane_ptr(ni, 0));
      std::copy_n(a.plane_ptr(ni, 0), a.c * a.plane(), cat.plane_ptr(ni, skip.c));
    }
    x = conv_unit(layer++, cat, cache, running, trace);
    x = conv_unit(layer++, x, cache, running, trace);
  }
  Tensor4<Real> logits = conv_unit(layer++, x, cache, running, trace);
  Tensor4<Real> probs;
  kernels::softmax_forward(logits, probs);
  return probs;
}

template <typename Real>
Tensor4<Real> BasicUNet<Real>::forward(const Tensor4<Real>& input) const {
  return run_forward(input, nullptr, {}, nullptr);
}

template <typename Real>
const Tensor4<Real>& BasicUNet<Real>::forward_train(const Tensor4<Real>& input) {
  cache_.probs = run_forward(input, &cache_, buffers_, nullptr);
  cache_.valid = true;
  return cache_.probs;
}

template <typename Real>
std::vector<ShapeTrace> BasicUNet<Real>::trace_shapes() const {
  std::vector<ShapeTrace> trace;
  run_forward(Tensor4<Real>(1, 3, config_.height, config_.width), nullptr, {}, &trace);
  return trace;
}

template <typename Real>
void BasicUNet<Real>::zero_grad() {
  std::fill(grads_.begin(), grads_.end(), Real(0));
}

template <typename Real>
Tensor4<Real> BasicUNet<Real>::conv_unit_backward(std::size_t layer, Tensor4<Real> grad, bool need_input_grad) {
  const LayerSpec& spec = layers_[layer];
  const LayerSlots& slot = slots_[layer];
  const std::size_t oc = static_cast<std::size_t>(spec.out_channels);
  std::span<Real> g(grads_);
  if (spec.kernel == 3) {
    kernels::relu_backward(cache_.conv_out[layer], grad);
    if (spec.batch_norm) {
      Tensor4<Real> pre;
      kernels::batchnorm_backward<Real>(grad, std::span<const Real>(params_).subspan(slot.gamma, oc), cache_.bn[layer],
                                        pre, g.subspan(slot.gamma, oc), g.subspan(slot.beta, oc));
      grad = std::move(pre);
    }
  }
  const std::size_t wsize = static_cast<std::size_t>(spec.kernel) * spec.kernel * spec.in_channels * oc;
  kernels::conv2d_backward_params<Real>(cache_.conv_in[layer], grad, spec.kernel, g.subspan(slot.weight, wsize),
                                        g.subspan(slot.bias, oc));
  Tensor4<Real> grad_in;
  if (need_input_grad) {
    kernels::conv2d_backward_input<Real>(grad, std::span<const Real>(params_).subspan(slot.weight, wsize),
                                         spec.in_channels, spec.kernel, grad_in);
  }
  return grad_in;
}

template <typename Real>
void BasicUNet<Real>::backward(const Tensor4<Real>& grad_probs) {
  if (!cache_.valid) throw ShapeError("backward() called without a preceding forward_train()");
  if (!grad_probs.same_shape(cache_.probs)) throw ShapeError("backward(): gradient shape differs from output");
  const int d = config_.depth;
  const std::size_t enc_layers = 2 * static_cast<std::size_t>(d);
  const std::size_t bottleneck = enc_layers;
  auto dec_layer = [&](int s, int k) {  // k: 0 = up, 1 = conv1, 2 = conv2
    return bottleneck + 2 + 3 * static_cast<std::size_t>(d - 1 - s) + static_cast<std::size_t>(k);
  };
  const std::size_t head = layers_.size() - 1;

  Tensor4<Real> g;
  kernels::softmax_backward(cache_.probs, grad_probs, g);
  g = conv_unit_backward(head, std::move(g), true);

  std::vector<Tensor4<Real>> skip_grads(static_cast<std::size_t>(d));
  for (int s = 0; s < d; ++s) {
    g = conv_unit_backward(dec_layer(s, 2), std::move(g), true);
    g = conv_unit_backward(dec_layer(s, 1), std::move(g), true);
    const int skip_c = layers_[dec_layer(s, 0)].out_channels;
    Tensor4<Real> gs(g.n, skip_c, g.h, g.w);
    Tensor4<Real> ga(g.n, g.c - skip_c, g.h, g.w);
    for (int ni = 0; ni < g.n; ++ni) {
      std::copy_n(g.plane_ptr(ni, 0), gs.c * g.plane(), gs.plane_ptr(ni, 0));
      std::copy_n(g.plane_ptr(ni, skip_c), ga.c * g.plane(), ga.plane_ptr(ni, 0));
    }
    skip_grads[static_cast<std::size_t>(s)] = std::move(gs);
    Tensor4<Real> gu = conv_unit_backward(dec_layer(s, 0), std::move(ga), true);
    kernels::upsample2_backward(gu, g);
  }
  g = conv_unit_backward(bottleneck + 1, std::move(g), true);
  g = conv_unit_backward(bottleneck, std::move(g), true);
  for (int s = d - 1; s >= 0; --s) {
    Tensor4<Real> gp;
    kernels::maxpool2_backward(g, cache_.pool_argmax[static_cast<std::size_t>(s)], gp);
    const Tensor4<Real>& gs = skip_grads[static_cast<std::size_t>(s)];
    for (std::size_t i = 0; i < gp.size(); ++i) gp.data[i] += gs.data[i];
    const std::size_t first = 2 * static_cast<std::size_t>(s);
    g = conv_unit_backward(first + 1, std::move(gp), true);
    g = conv_unit_backward(first, std::move(g), s > 0);
  }
}

template <typename Real>
Tensor4<Real> images_to_tensor(std::span<const Image> images) {
  if (images.empty()) throw ShapeError("empty image batch");
  const int h = images.front().height;
  const int w = images.front().width;
  Tensor4<Real> t(static_cast<int>(images.size()), 3, h, w);
  for (std::size_t n = 0; n < images.size(); ++n) {
    const Image& img = images[n];
    if (img.height != h || img.width != w) throw ShapeError("images in a batch must share dimensions");
    for (int c = 0; c < 3; ++c) {
      Real* dst = t.plane_ptr(static_cast<int>(n), c);
      for (std::size_t i = 0; i < t.plane(); ++i) dst[i] = static_cast<Real>(img.pixels[i * 3 + c]);
    }
  }
  return t;
}

template <typename Real>
std::vector<ClassMap> tensor_to_maps(const Tensor4<Real>& t) {
  std::vector<ClassMap> maps;
  maps.reserve(static_cast<std::size_t>(t.n));
  for (int n = 0; n < t.n; ++n) {
    ClassMap m(t.h, t.w, t.c);
    const Real* src = t.plane_ptr(n, 0);
    for (std::size_t i = 0; i < m.values.size(); ++i) m.values[i] = static_cast<float>(src[i]);
    maps.push_back(std::move(m));
  }
  return maps;
}

template <typename Real>
Tensor4<Real> maps_to_tensor(std::span<const ClassMap> maps) {
  if (maps.empty()) throw ShapeError("empty map batch");
  const ClassMap& f = maps.front();
  Tensor4<Real> t(static_cast<int>(maps.size()), f.channels, f.height, f.width);
  for (std::size_t n = 0; n < maps.size(); ++n) {
    if (maps[n].height != f.height || maps[n].width != f.width || maps[n].channels != f.channels) {
      throw ShapeError("maps in a batch must share dimensions");
    }
    std::copy(maps[n].values.begin(), maps[n].values.end(), t.plane_ptr(static_cast<int>(n), 0));
  }
  return t;
}

std::vector<ProbabilityMap> predict(const UNet& model, std::span<const Image> images) {
  return tensor_to_maps(model.forward(images_to_tensor<float>(images)));
}

template class BasicUNet<float>;
template class BasicUNet<double>;
template Tensor4<float> images_to_tensor<float>(std::span<const Image>);
template Tensor4<double> images_to_tensor<double>(std::span<const Image>);
template std::vector<ClassMap> tensor_to_maps<float>(const Tensor4<float>&);
template std::vector<ClassMap> tensor_to_maps<double>(const Tensor4<double>&);
template Tensor4<float> maps_to_tensor<float>(std::span<const ClassMap>);
template Tensor4<double> maps_to_tensor<double>(std::span<const ClassMap>);

}  // namespace surgseg
