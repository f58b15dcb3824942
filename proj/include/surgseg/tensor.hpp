#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "surgseg/taxonomy.hpp"

namespace surgseg {

/// Float image in [0,1], interleaved RGB (H, W, 3).
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int h, int w, float fill = 0.0f)
      : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, fill) {}

  float& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  float at(int y, int x, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  friend bool operator==(const Image&, const Image&) = default;
};

/// Per-pixel class indices, row-major.
struct LabelMask {
  int height = 0;
  int width = 0;
  std::vector<ClassId> labels;

  LabelMask() = default;
  LabelMask(int h, int w, ClassId fill)
      : height(h), width(w), labels(static_cast<std::size_t>(h) * w, fill) {}

  ClassId& at(int y, int x) { return labels[static_cast<std::size_t>(y) * width + x]; }
  ClassId at(int y, int x) const { return labels[static_cast<std::size_t>(y) * width + x]; }
  std::size_t count(ClassId id) const;
  friend bool operator==(const LabelMask&, const LabelMask&) = default;
};

/// Per-pixel, per-class values stored channel-planar (C, H, W). Used both
/// for one-hot targets and for softmax outputs.
struct ClassMap {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> values;

  ClassMap() = default;
  ClassMap(int h, int w, int c, float fill = 0.0f)
      : height(h), width(w), channels(c),
        values(static_cast<std::size_t>(h) * w * c, fill) {}

  std::size_t plane_size() const { return static_cast<std::size_t>(height) * width; }
  float& at(int y, int x, int c) { return values[c * plane_size() + static_cast<std::size_t>(y) * width + x]; }
  float at(int y, int x, int c) const { return values[c * plane_size() + static_cast<std::size_t>(y) * width + x]; }
  std::span<const float> channel(int c) const { return {values.data() + c * plane_size(), plane_size()}; }
  std::span<float> channel(int c) { return {values.data() + c * plane_size(), plane_size()}; }
  friend bool operator==(const ClassMap&, const ClassMap&) = default;
};

/// Softmax output of the network; per pixel the channels sum to one.
using ProbabilityMap = ClassMap;
/// Exactly one channel equals 1 at every pixel.
using OneHotMask = ClassMap;

OneHotMask one_hot(const LabelMask& mask, int num_channels);
/// Per-pixel argmax over channels; ties go to the lowest index.
LabelMask channel_argmax(const ClassMap& map);

/// Dense NCHW activation tensor.
template <typename Real>
struct Tensor4 {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<Real> data;

  Tensor4() = default;
  Tensor4(int n_, int c_, int h_, int w_, Real fill = Real(0))
      : n(n_), c(c_), h(h_), w(w_), data(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill) {}

  void resize(int n_, int c_, int h_, int w_) {
    n = n_; c = c_; h = h_; w = w_;
    data.assign(static_cast<std::size_t>(n) * c * h * w, Real(0));
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  std::size_t size() const { return data.size(); }
  Real* plane_ptr(int ni, int ci) { return data.data() + (static_cast<std::size_t>(ni) * c + ci) * plane(); }
  const Real* plane_ptr(int ni, int ci) const { return data.data() + (static_cast<std::size_t>(ni) * c + ci) * plane(); }
  Real& at(int ni, int ci, int y, int x) { return plane_ptr(ni, ci)[static_cast<std::size_t>(y) * w + x]; }
  Real at(int ni, int ci, int y, int x) const { return plane_ptr(ni, ci)[static_cast<std::size_t>(y) * w + x]; }
  bool same_shape(const Tensor4& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
};

}  // namespace surgseg
