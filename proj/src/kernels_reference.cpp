#include <cmath>

#include "surgseg/errors.hpp"
#include "surgseg/kernels.hpp"

namespace surgseg::kernels::reference {

template <typename Real>
void conv2d_forward(const Tensor4<Real>& in, std::span<const Real> weight, std::span<const Real> bias,
                    int out_channels, int ksize, Tensor4<Real>& out) {
  const int pad = ksize / 2;
  if (weight.size() != static_cast<std::size_t>(out_channels) * in.c * ksize * ksize) {
    throw ShapeError("reference conv2d_forward: weight size mismatch");
  }
  out.resize(in.n, out_channels, in.h, in.w);
  for (int n = 0; n < in.n; ++n)
    for (int co = 0; co < out_channels; ++co)
      for (int y = 0; y < in.h; ++y)
        for (int x = 0; x < in.w; ++x) {
          Real s = bias.empty() ? Real(0) : bias[co];
          for (int ci = 0; ci < in.c; ++ci)
            for (int ky = 0; ky < ksize; ++ky)
              for (int kx = 0; kx < ksize; ++kx) {
                const int sy = y + ky - pad;
                const int sx = x + kx - pad;
                if (sy < 0 || sy >= in.h || sx < 0 || sx >= in.w) continue;
                s += weight[((static_cast<std::size_t>(co) * in.c + ci) * ksize + ky) * ksize + kx] *
                     in.at(n, ci, sy, sx);
              }
          out.at(n, co, y, x) = s;
        }
}

template <typename Real>
void conv2d_backward_input(const Tensor4<Real>& grad_out, std::span<const Real> weight, int in_channels, int ksize,
                           Tensor4<Real>& grad_in) {
  const int pad = ksize / 2;
  grad_in.resize(grad_out.n, in_channels, grad_out.h, grad_out.w);
  for (int n = 0; n < grad_out.n; ++n)
    for (int co = 0; co < grad_out.c; ++co)
      for (int y = 0; y < grad_out.h; ++y)
        for (int x = 0; x < grad_out.w; ++x) {
          const Real g = grad_out.at(n, co, y, x);
          for (int ci = 0; ci < in_channels; ++ci)
            for (int ky = 0; ky < ksize; ++ky)
              for (int kx = 0; kx < ksize; ++kx) {
                const int sy = y + ky - pad;
                const int sx = x + kx - pad;
                if (sy < 0 || sy >= grad_out.h || sx < 0 || sx >= grad_out.w) continue;
                grad_in.at(n, ci, sy, sx) +=
                    g * weight[((static_cast<std::size_t>(co) * in_channels + ci) * ksize + ky) * ksize + kx];
              }
        }
}

template <typename Real>
void conv2d_backward_params(const Tensor4<Real>& in, const Tensor4<Real>& grad_out, int ksize,
                            std::span<Real> grad_weight, std::span<Real> grad_bias) {
  const int pad = ksize / 2;
  for (int n = 0; n < in.n; ++n)
    for (int co = 0; co < grad_out.c; ++co)
      for (int y = 0; y < in.h; ++y)
        for (int x = 0; x < in.w; ++x) {
          const Real g = grad_out.at(n, co, y, x);
          grad_bias[co] += g;
          for (int ci = 0; ci < in.c; ++ci)
            for (int ky = 0; ky < ksize; ++ky)
              for (int kx = 0; kx < ksize; ++kx) {
                const int sy = y + ky - pad;
                const int sx = x + kx - pad;
                if (sy < 0 || sy >= in.h || sx < 0 || sx >= in.w) continue;
                grad_weight[((static_cast<std::size_t>(co) * in.c + ci) * ksize + ky) * ksize + kx] +=
                    g * in.at(n, ci, sy, sx);
              }
        }
}

template <typename Real>
void maxpool2_forward(const Tensor4<Real>& in, Tensor4<Real>& out, std::vector<int>& argmax) {
  out.resize(in.n, in.c, in.h / 2, in.w / 2);
  argmax.assign(out.size(), 0);
  std::size_t k = 0;
  for (int n = 0; n < in.n; ++n)
    for (int c = 0; c < in.c; ++c)
      for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x, ++k) {
          int by = 2 * y, bx = 2 * x;
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx)
              if (in.at(n, c, 2 * y + dy, 2 * x + dx) > in.at(n, c, by, bx)) {
                by = 2 * y + dy;
                bx = 2 * x + dx;
              }
          out.at(n, c, y, x) = in.at(n, c, by, bx);
          argmax[k] = by * in.w + bx;
        }
}

template <typename Real>
void upsample2_forward(const Tensor4<Real>& in, Tensor4<Real>& out) {
  out.resize(in.n, in.c, in.h * 2, in.w * 2);
  for (int n = 0; n < in.n; ++n)
    for (int c = 0; c < in.c; ++c)
      for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x) out.at(n, c, y, x) = in.at(n, c, y / 2, x / 2);
}

template <typename Real>
void softmax_forward(const Tensor4<Real>& logits, Tensor4<Real>& probs) {
  probs.resize(logits.n, logits.c, logits.h, logits.w);
  for (int n = 0; n < logits.n; ++n)
    for (int y = 0; y < logits.h; ++y)
      for (int x = 0; x < logits.w; ++x) {
        Real sum = 0;
        for (int c = 0; c < logits.c; ++c) sum += std::exp(logits.at(n, c, y, x));
        for (int c = 0; c < logits.c; ++c) probs.at(n, c, y, x) = std::exp(logits.at(n, c, y, x)) / sum;
      }
}

#define SURGSEG_INSTANTIATE(Real)                                                                                  \
  template void conv2d_forward<Real>(const Tensor4<Real>&, std::span<const Real>, std::span<const Real>, int, int, \
                                     Tensor4<Real>&);                                                              \
  template void conv2d_backward_input<Real>(const Tensor4<Real>&, std::span<const Real>, int, int, Tensor4<Real>&); \
  template void conv2d_backward_params<Real>(const Tensor4<Real>&, const Tensor4<Real>&, int, std::span<Real>,     \
                                             std::span<Real>);                                                     \
  template void maxpool2_forward<Real>(const Tensor4<Real>&, Tensor4<Real>&, std::vector<int>&);                   \
  template void upsample2_forward<Real>(const Tensor4<Real>&, Tensor4<Real>&);                                     \
  template void softmax_forward<Real>(const Tensor4<Real>&, Tensor4<Real>&);

SURGSEG_INSTANTIATE(float)
SURGSEG_INSTANTIATE(double)
#undef SURGSEG_INSTANTIATE

}  // namespace surgseg::kernels::reference
