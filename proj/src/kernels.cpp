#include "surgseg/kernels.hpp"

#include <algorithm>
#include <cmath>

#include "surgseg/errors.hpp"

namespace surgseg::kernels {
namespace {

template <typename Real>
void check_conv_weights(std::size_t weight_size, std::size_t expected, const char* who) {
  if (weight_size != expected) throw ShapeError(std::string(who) + ": weight size does not match channels");
}

// Copies every plane into a (h+2) x (w+2) zero-bordered buffer.
template <typename Real>
std::vector<Real> pad_planes(const Tensor4<Real>& t) {
  const int ph = t.h + 2;
  const int pw = t.w + 2;
  const int planes = t.n * t.c;
  std::vector<Real> padded(static_cast<std::size_t>(planes) * ph * pw, Real(0));
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const Real* src = t.data.data() + static_cast<std::size_t>(p) * t.plane();
    Real* dst = padded.data() + static_cast<std::size_t>(p) * ph * pw;
    for (int y = 0; y < t.h; ++y) {
      std::copy(src + static_cast<std::size_t>(y) * t.w, src + static_cast<std::size_t>(y + 1) * t.w,
                dst + static_cast<std::size_t>(y + 1) * pw + 1);
    }
  }
  return padded;
}

// out[n][co] = bias[co] + sum_ci sum_taps w[co][ci][tap] * padded[n][ci] shifted.
template <typename Real>
void conv3x3_padded(const std::vector<Real>& padded, int n, int cin, int h, int w, const Real* weight,
                    const Real* bias, int cout, Real* out) {
  const int pw = w + 2;
  const std::size_t pplane = static_cast<std::size_t>(h + 2) * pw;
  const std::size_t oplane = static_cast<std::size_t>(h) * w;
#pragma omp parallel for collapse(2) schedule(static)
  for (int ni = 0; ni < n; ++ni) {
    for (int co = 0; co < cout; ++co) {
      Real* o = out + (static_cast<std::size_t>(ni) * cout + co) * oplane;
      std::fill(o, o + oplane, bias ? bias[co] : Real(0));
      for (int ci = 0; ci < cin; ++ci) {
        const Real* p = padded.data() + (static_cast<std::size_t>(ni) * cin + ci) * pplane;
        const Real* k = weight + (static_cast<std::size_t>(co) * cin + ci) * 9;
        const Real k0 = k[0], k1 = k[1], k2 = k[2], k3 = k[3], k4 = k[4], k5 = k[5], k6 = k[6], k7 = k[7], k8 = k[8];
        for (int y = 0; y < h; ++y) {
          const Real* r0 = p + static_cast<std::size_t>(y) * pw;
          const Real* r1 = r0 + pw;
          const Real* r2 = r1 + pw;
          Real* orow = o + static_cast<std::size_t>(y) * w;
#pragma omp simd
          for (int x = 0; x < w; ++x) {
            orow[x] += k0 * r0[x] + k1 * r0[x + 1] + k2 * r0[x + 2] + k3 * r1[x] + k4 * r1[x + 1] +
                       k5 * r1[x + 2] + k6 * r2[x] + k7 * r2[x + 1] + k8 * r2[x + 2];
          }
        }
      }
    }
  }
}

template <typename Real>
void conv1x1(const Real* in, int n, int cin, std::size_t plane, const Real* weight, const Real* bias, int cout,
             Real* out) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int ni = 0; ni < n; ++ni) {
    for (int co = 0; co < cout; ++co) {
      Real* o = out + (static_cast<std::size_t>(ni) * cout + co) * plane;
      std::fill(o, o + plane, bias ? bias[co] : Real(0));
      for (int ci = 0; ci < cin; ++ci) {
        const Real* src = in + (static_cast<std::size_t>(ni) * cin + ci) * plane;
        const Real k = weight[static_cast<std::size_t>(co) * cin + ci];
#pragma omp simd
        for (std::size_t i = 0; i < plane; ++i) o[i] += k * src[i];
      }
    }
  }
}

template <typename Real>
Real dot(const Real* a, const Real* b, int len) {
  Real s = 0;
#pragma omp simd reduction(+ : s)
  for (int i = 0; i < len; ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

template <typename Real>
void conv2d_forward(const Tensor4<Real>& in, std::span<const Real> weight, std::span<const Real> bias,
                    int out_channels, int ksize, Tensor4<Real>& out) {
  check_conv_weights<Real>(weight.size(), static_cast<std::size_t>(out_channels) * in.c * ksize * ksize,
                           "conv2d_forward");
  if (!bias.empty() && bias.size() != static_cast<std::size_t>(out_channels)) {
    throw ShapeError("conv2d_forward: bias size mismatch");
  }
  out.resize(in.n, out_channels, in.h, in.w);
  const Real* b = bias.empty() ? nullptr : bias.data();
  if (ksize == 1) {
    conv1x1(in.data.data(), in.n, in.c, in.plane(), weight.data(), b, out_channels, out.data.data());
  } else if (ksize == 3) {
    conv3x3_padded(pad_planes(in), in.n, in.c, in.h, in.w, weight.data(), b, out_channels, out.data.data());
  } else {
    throw ShapeError("conv2d_forward: only 1x1 and 3x3 kernels are supported");
  }
}

template <typename Real>
void conv2d_backward_input(const Tensor4<Real>& grad_out, std::span<const Real> weight, int in_channels, int ksize,
                           Tensor4<Real>& grad_in) {
  const int cout = grad_out.c;
  const int kk = ksize * ksize;
  check_conv_weights<Real>(weight.size(), static_cast<std::size_t>(cout) * in_channels * kk, "conv2d_backward_input");
  // Transposed and spatially flipped weights turn the adjoint into a
  // forward convolution over grad_out.
  std::vector<Real> flipped(weight.size());
  for (int co = 0; co < cout; ++co) {
    for (int ci = 0; ci < in_channels; ++ci) {
      for (int t = 0; t < kk; ++t) {
        flipped[(static_cast<std::size_t>(ci) * cout + co) * kk + t] =
            weight[(static_cast<std::size_t>(co) * in_channels + ci) * kk + (kk - 1 - t)];
      }
    }
  }
  grad_in.resize(grad_out.n, in_channels, grad_out.h, grad_out.w);
  if (ksize == 1) {
    conv1x1(grad_out.data.data(), grad_out.n, cout, grad_out.plane(), flipped.data(), static_cast<const Real*>(nullptr),
            in_channels, grad_in.data.data());
  } else if (ksize == 3) {
    conv3x3_padded(pad_planes(grad_out), grad_out.n, cout, grad_out.h, grad_out.w, flipped.data(),
                   static_cast<const Real*>(nullptr), in_channels, grad_in.data.data());
  } else {
    throw ShapeError("conv2d_backward_input: only 1x1 and 3x3 kernels are supported");
  }
}

template <typename Real>
void conv2d_backward_params(const Tensor4<Real>& in, const Tensor4<Real>& grad_out, int ksize,
                            std::span<Real> grad_weight, std::span<Real> grad_bias) {
  const int cin = in.c;
  const int cout = grad_out.c;
  const int kk = ksize * ksize;
  check_conv_weights<Real>(grad_weight.size(), static_cast<std::size_t>(cout) * cin * kk, "conv2d_backward_params");
  if (grad_bias.size() != static_cast<std::size_t>(cout)) throw ShapeError("conv2d_backward_params: bias size mismatch");
  if (in.n != grad_out.n || in.h != grad_out.h || in.w != grad_out.w) {
    throw ShapeError("conv2d_backward_params: input and gradient shapes differ");
  }
  const int h = in.h;
  const int w = in.w;
  const int plane = h * w;
  if (ksize == 1) {
#pragma omp parallel for schedule(static)
    for (int co = 0; co < cout; ++co) {
      for (int ni = 0; ni < in.n; ++ni) {
        const Real* g = grad_out.plane_ptr(ni, co);
        Real sb = 0;
#pragma omp simd reduction(+ : sb)
        for (int i = 0; i < plane; ++i) sb += g[i];
        grad_bias[co] += sb;
        for (int ci = 0; ci < cin; ++ci) {
          grad_weight[static_cast<std::size_t>(co) * cin + ci] += dot(g, in.plane_ptr(ni, ci), plane);
        }
      }
    }
    return;
  }
  if (ksize != 3) throw ShapeError("conv2d_backward_params: only 1x1 and 3x3 kernels are supported");
  const std::vector<Real> padded = pad_planes(in);
  const int pw = w + 2;
  const std::size_t pplane = static_cast<std::size_t>(h + 2) * pw;
#pragma omp parallel
  {
    // lanes[t * w + x] collects tap t at column x; reduced once per plane.
    std::vector<Real> lanes(static_cast<std::size_t>(9) * w);
#pragma omp for schedule(static)
    for (int co = 0; co < cout; ++co) {
      for (int ni = 0; ni < in.n; ++ni) {
        const Real* g = grad_out.plane_ptr(ni, co);
        Real sb = 0;
#pragma omp simd reduction(+ : sb)
        for (int i = 0; i < plane; ++i) sb += g[i];
        grad_bias[co] += sb;
      }
      for (int ci = 0; ci < cin; ++ci) {
        std::fill(lanes.begin(), lanes.end(), Real(0));
        for (int ni = 0; ni < in.n; ++ni) {
          const Real* g = grad_out.plane_ptr(ni, co);
          const Real* p = padded.data() + (static_cast<std::size_t>(ni) * cin + ci) * pplane;
          for (int y = 0; y < h; ++y) {
            const Real* grow = g + static_cast<std::size_t>(y) * w;
            for (int ky = 0; ky < 3; ++ky) {
              const Real* prow = p + static_cast<std::size_t>(y + ky) * pw;
              Real* l0 = lanes.data() + static_cast<std::size_t>(ky * 3) * w;
              Real* l1 = l0 + w;
              Real* l2 = l1 + w;
#pragma omp simd
              for (int x = 0; x < w; ++x) {
                l0[x] += grow[x] * prow[x];
                l1[x] += grow[x] * prow[x + 1];
                l2[x] += grow[x] * prow[x + 2];
              }
            }
          }
        }
        Real* gw = grad_weight.data() + (static_cast<std::size_t>(co) * cin + ci) * 9;
        for (int t = 0; t < 9; ++t) {
          const Real* l = lanes.data() + static_cast<std::size_t>(t) * w;
          Real s = 0;
#pragma omp simd reduction(+ : s)
          for (int x = 0; x < w; ++x) s += l[x];
          gw[t] += s;
        }
      }
    }
  }
}

template <typename Real>
void relu_forward(Tensor4<Real>& x) {
  Real* d = x.data.data();
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(x.size());
#pragma omp parallel for simd schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) d[i] = d[i] > Real(0) ? d[i] : Real(0);
}

template <typename Real>
void relu_backward(const Tensor4<Real>& out, Tensor4<Real>& grad) {
  if (!out.same_shape(grad)) throw ShapeError("relu_backward: shape mismatch");
  const Real* o = out.data.data();
  Real* g = grad.data.data();
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(out.size());
#pragma omp parallel for simd schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) g[i] = o[i] > Real(0) ? g[i] : Real(0);
}

template <typename Real>
void maxpool2_forward(const Tensor4<Real>& in, Tensor4<Real>& out, std::vector<int>& argmax) {
  if (in.h % 2 || in.w % 2) throw ShapeError("maxpool2: spatial dims must be even");
  out.resize(in.n, in.c, in.h / 2, in.w / 2);
  argmax.assign(out.size(), 0);
  const int planes = in.n * in.c;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const Real* src = in.data.data() + static_cast<std::size_t>(p) * in.plane();
    Real* dst = out.data.data() + static_cast<std::size_t>(p) * out.plane();
    int* arg = argmax.data() + static_cast<std::size_t>(p) * out.plane();
    for (int y = 0; y < out.h; ++y) {
      for (int x = 0; x < out.w; ++x) {
        const int base = 2 * y * in.w + 2 * x;
        const int cand[4] = {base, base + 1, base + in.w, base + in.w + 1};
        int best = cand[0];
        for (int k = 1; k < 4; ++k) {
          if (src[cand[k]] > src[best]) best = cand[k];
        }
        dst[y * out.w + x] = src[best];
        arg[y * out.w + x] = best;
      }
    }
  }
}

template <typename Real>
void maxpool2_backward(const Tensor4<Real>& grad_out, const std::vector<int>& argmax, Tensor4<Real>& grad_in) {
  if (argmax.size() != grad_out.size()) throw ShapeError("maxpool2_backward: argmax size mismatch");
  grad_in.resize(grad_out.n, grad_out.c, grad_out.h * 2, grad_out.w * 2);
  const int planes = grad_out.n * grad_out.c;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const Real* g = grad_out.data.data() + static_cast<std::size_t>(p) * grad_out.plane();
    const int* arg = argmax.data() + static_cast<std::size_t>(p) * grad_out.plane();
    Real* dst = grad_in.data.data() + static_cast<std::size_t>(p) * grad_in.plane();
    for (std::size_t i = 0; i < grad_out.plane(); ++i) dst[arg[i]] += g[i];
  }
}

template <typename Real>
void upsample2_forward(const Tensor4<Real>& in, Tensor4<Real>& out) {
  out.resize(in.n, in.c, in.h * 2, in.w * 2);
  const int planes = in.n * in.c;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const Real* src = in.data.data() + static_cast<std::size_t>(p) * in.plane();
    Real* dst = out.data.data() + static_cast<std::size_t>(p) * out.plane();
    for (int y = 0; y < out.h; ++y) {
      const Real* srow = src + static_cast<std::size_t>(y / 2) * in.w;
      Real* drow = dst + static_cast<std::size_t>(y) * out.w;
      for (int x = 0; x < out.w; ++x) drow[x] = srow[x / 2];
    }
  }
}

template <typename Real>
void upsample2_backward(const Tensor4<Real>& grad_out, Tensor4<Real>& grad_in) {
  if (grad_out.h % 2 || grad_out.w % 2) throw ShapeError("upsample2_backward: spatial dims must be even");
  grad_in.resize(grad_out.n, grad_out.c, grad_out.h / 2, grad_out.w / 2);
  const int planes = grad_out.n * grad_out.c;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const Real* g = grad_out.data.data() + static_cast<std::size_t>(p) * grad_out.plane();
    Real* dst = grad_in.data.data() + static_cast<std::size_t>(p) * grad_in.plane();
    for (int y = 0; y < grad_in.h; ++y) {
      const Real* g0 = g + static_cast<std::size_t>(2 * y) * grad_out.w;
      const Real* g1 = g0 + grad_out.w;
      for (int x = 0; x < grad_in.w; ++x) {
        dst[y * grad_in.w + x] = g0[2 * x] + g0[2 * x + 1] + g1[2 * x] + g1[2 * x + 1];
      }
    }
  }
}

template <typename Real>
void softmax_forward(const Tensor4<Real>& logits, Tensor4<Real>& probs) {
  probs.resize(logits.n, logits.c, logits.h, logits.w);
  const std::size_t plane = logits.plane();
  const int channels = logits.c;
#pragma omp parallel for schedule(static)
  for (int ni = 0; ni < logits.n; ++ni) {
    const Real* z = logits.plane_ptr(ni, 0);
    Real* p = probs.plane_ptr(ni, 0);
    for (std::size_t i = 0; i < plane; ++i) {
      Real m = z[i];
      for (int c = 1; c < channels; ++c) m = std::max(m, z[c * plane + i]);
      Real sum = 0;
      for (int c = 0; c < channels; ++c) {
        const Real e = std::exp(z[c * plane + i] - m);
        p[c * plane + i] = e;
        sum += e;
      }
      const Real inv = Real(1) / sum;
      for (int c = 0; c < channels; ++c) p[c * plane + i] *= inv;
    }
  }
}

template <typename Real>
void softmax_backward(const Tensor4<Real>& probs, const Tensor4<Real>& grad_probs, Tensor4<Real>& grad_logits) {
  if (!probs.same_shape(grad_probs)) throw ShapeError("softmax_backward: shape mismatch");
  grad_logits.resize(probs.n, probs.c, probs.h, probs.w);
  const std::size_t plane = probs.plane();
  const int channels = probs.c;
#pragma omp parallel for schedule(static)
  for (int ni = 0; ni < probs.n; ++ni) {
    const Real* p = probs.plane_ptr(ni, 0);
    const Real* gp = grad_probs.plane_ptr(ni, 0);
    Real* gz = grad_logits.plane_ptr(ni, 0);
    for (std::size_t i = 0; i < plane; ++i) {
      Real inner = 0;
      for (int c = 0; c < channels; ++c) inner += gp[c * plane + i] * p[c * plane + i];
      for (int c = 0; c < channels; ++c) gz[c * plane + i] = p[c * plane + i] * (gp[c * plane + i] - inner);
    }
  }
}

template <typename Real>
void batchnorm_forward_train(const Tensor4<Real>& in, std::span<const Real> gamma, std::span<const Real> beta,
                             Real eps, Real momentum, std::span<Real> running_mean, std::span<Real> running_var,
                             Tensor4<Real>& out, BatchNormCache<Real>& cache) {
  const int channels = in.c;
  const std::size_t plane = in.plane();
  const double count = static_cast<double>(in.n) * plane;
  out.resize(in.n, in.c, in.h, in.w);
  cache.normalized.resize(in.n, in.c, in.h, in.w);
  cache.mean.assign(static_cast<std::size_t>(channels), Real(0));
  cache.inv_std.assign(static_cast<std::size_t>(channels), Real(0));
#pragma omp parallel for schedule(static)
  for (int c = 0; c < channels; ++c) {
    double sum = 0.0;
    for (int ni = 0; ni < in.n; ++ni) {
      const Real* x = in.plane_ptr(ni, c);
      for (std::size_t i = 0; i < plane; ++i) sum += x[i];
    }
    const double mean = sum / count;
    double sq = 0.0;
    for (int ni = 0; ni < in.n; ++ni) {
      const Real* x = in.plane_ptr(ni, c);
      for (std::size_t i = 0; i < plane; ++i) sq += (x[i] - mean) * (x[i] - mean);
    }
    const double var = sq / count;
    const double inv_std = 1.0 / std::sqrt(var + static_cast<double>(eps));
    cache.mean[c] = static_cast<Real>(mean);
    cache.inv_std[c] = static_cast<Real>(inv_std);
    const double unbiased = count > 1 ? sq / (count - 1) : var;
    running_mean[c] = static_cast<Real>((1 - momentum) * running_mean[c] + momentum * mean);
    running_var[c] = static_cast<Real>((1 - momentum) * running_var[c] + momentum * unbiased);
    for (int ni = 0; ni < in.n; ++ni) {
      const Real* x = in.plane_ptr(ni, c);
      Real* xh = cache.normalized.plane_ptr(ni, c);
      Real* y = out.plane_ptr(ni, c);
      for (std::size_t i = 0; i < plane; ++i) {
        xh[i] = static_cast<Real>((x[i] - mean) * inv_std);
        y[i] = gamma[c] * xh[i] + beta[c];
      }
    }
  }
}

template <typename Real>
void batchnorm_forward_eval(const Tensor4<Real>& in, std::span<const Real> gamma, std::span<const Real> beta,
                            Real eps, std::span<const Real> running_mean, std::span<const Real> running_var,
                            Tensor4<Real>& out) {
  out.resize(in.n, in.c, in.h, in.w);
  const std::size_t plane = in.plane();
#pragma omp parallel for collapse(2) schedule(static)
  for (int ni = 0; ni < in.n; ++ni) {
    for (int c = 0; c < in.c; ++c) {
      const Real scale = gamma[c] / std::sqrt(running_var[c] + eps);
      const Real shift = beta[c] - running_mean[c] * scale;
      const Real* x = in.plane_ptr(ni, c);
      Real* y = out.plane_ptr(ni, c);
      for (std::size_t i = 0; i < plane; ++i) y[i] = x[i] * scale + shift;
    }
  }
}

template <typename Real>
void batchnorm_backward(const Tensor4<Real>& grad_out, std::span<const Real> gamma, const BatchNormCache<Real>& cache,
                        Tensor4<Real>& grad_in, std::span<Real> grad_gamma, std::span<Real> grad_beta) {
  const std::size_t plane = grad_out.plane();
  const double count = static_cast<double>(grad_out.n) * plane;
  grad_in.resize(grad_out.n, grad_out.c, grad_out.h, grad_out.w);
#pragma omp parallel for schedule(static)
  for (int c = 0; c < grad_out.c; ++c) {
    double sum_g = 0.0;
    double sum_gx = 0.0;
    for (int ni = 0; ni < grad_out.n; ++ni) {
      const Real* g = grad_out.plane_ptr(ni, c);
      const Real* xh = cache.normalized.plane_ptr(ni, c);
      for (std::size_t i = 0; i < plane; ++i) {
        sum_g += g[i];
        sum_gx += g[i] * xh[i];
      }
    }
    grad_gamma[c] += static_cast<Real>(sum_gx);
    grad_beta[c] += static_cast<Real>(sum_g);
    const double k = static_cast<double>(gamma[c]) * cache.inv_std[c] / count;
    for (int ni = 0; ni < grad_out.n; ++ni) {
      const Real* g = grad_out.plane_ptr(ni, c);
      const Real* xh = cache.normalized.plane_ptr(ni, c);
      Real* gi = grad_in.plane_ptr(ni, c);
      for (std::size_t i = 0; i < plane; ++i) {
        gi[i] = static_cast<Real>(k * (count * g[i] - sum_g - xh[i] * sum_gx));
      }
    }
  }
}

#define SURGSEG_INSTANTIATE(Real)                                                                                  \
  template void conv2d_forward<Real>(const Tensor4<Real>&, std::span<const Real>, std::span<const Real>, int, int, \
                                     Tensor4<Real>&);                                                              \
  template void conv2d_backward_input<Real>(const Tensor4<Real>&, std::span<const Real>, int, int, Tensor4<Real>&); \
  template void conv2d_backward_params<Real>(const Tensor4<Real>&, const Tensor4<Real>&, int, std::span<Real>,     \
                                             std::span<Real>);                                                     \
  template void relu_forward<Real>(Tensor4<Real>&);                                                                \
  template void relu_backward<Real>(const Tensor4<Real>&, Tensor4<Real>&);                                         \
  template void maxpool2_forward<Real>(const Tensor4<Real>&, Tensor4<Real>&, std::vector<int>&);                   \
  template void maxpool2_backward<Real>(const Tensor4<Real>&, const std::vector<int>&, Tensor4<Real>&);            \
  template void upsample2_forward<Real>(const Tensor4<Real>&, Tensor4<Real>&);                                     \
  template void upsample2_backward<Real>(const Tensor4<Real>&, Tensor4<Real>&);                                    \
  template void softmax_forward<Real>(const Tensor4<Real>&, Tensor4<Real>&);                                       \
  template void softmax_backward<Real>(const Tensor4<Real>&, const Tensor4<Real>&, Tensor4<Real>&);                \
  template void batchnorm_forward_train<Real>(const Tensor4<Real>&, std::span<const Real>, std::span<const Real>,  \
                                              Real, Real, std::span<Real>, std::span<Real>, Tensor4<Real>&,        \
                                              BatchNormCache<Real>&);                                              \
  template void batchnorm_forward_eval<Real>(const Tensor4<Real>&, std::span<const Real>, std::span<const Real>,   \
                                             Real, std::span<const Real>, std::span<const Real>, Tensor4<Real>&);  \
  template void batchnorm_backward<Real>(const Tensor4<Real>&, std::span<const Real>, const BatchNormCache<Real>&, \
                                         Tensor4<Real>&, std::span<Real>, std::span<Real>);

SURGSEG_INSTANTIATE(float)
SURGSEG_INSTANTIATE(double)
#undef SURGSEG_INSTANTIATE

}  // namespace surgseg::kernels
