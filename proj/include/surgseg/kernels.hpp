#pragma once

// Dense NCHW layer kernels used by the U-Net.
//
// `surgseg::kernels` holds the OpenMP versions used for training and
// inference. Every parallel loop owns a disjoint slice of its output and
// accumulates in a fixed order, so results do not depend on the thread
// count. `surgseg::kernels::reference` holds plain serial loops with the
// textbook index arithmetic; tests and the benchmark compare the two.
//
// Convolutions are stride 1 with zero padding ksize/2, so spatial size is
// preserved. Weights are laid out [out][in][ky][kx].

#include <span>
#include <vector>

#include "surgseg/tensor.hpp"

namespace surgseg::kernels {

template <typename Real>
void conv2d_forward(const Tensor4<Real>& in, std::span<const Real> weight, std::span<const Real> bias,
                    int out_channels, int ksize, Tensor4<Real>& out);

/// grad_in is overwritten.
template <typename Real>
void conv2d_backward_input(const Tensor4<Real>& grad_out, std::span<const Real> weight, int in_channels, int ksize,
                           Tensor4<Real>& grad_in);

/// Accumulates (+=) into grad_weight and grad_bias.
template <typename Real>
void conv2d_backward_params(const Tensor4<Real>& in, const Tensor4<Real>& grad_out, int ksize,
                            std::span<Real> grad_weight, std::span<Real> grad_bias);

template <typename Real>
void relu_forward(Tensor4<Real>& x);
/// Zeroes grad wherever the forward output was not positive.
template <typename Real>
void relu_backward(const Tensor4<Real>& out, Tensor4<Real>& grad);

/// 2x2, stride 2. `argmax` receives the winning in-plane offset per output.
template <typename Real>
void maxpool2_forward(const Tensor4<Real>& in, Tensor4<Real>& out, std::vector<int>& argmax);
template <typename Real>
void maxpool2_backward(const Tensor4<Real>& grad_out, const std::vector<int>& argmax, Tensor4<Real>& grad_in);

/// Nearest-neighbour 2x upsampling.
template <typename Real>
void upsample2_forward(const Tensor4<Real>& in, Tensor4<Real>& out);
template <typename Real>
void upsample2_backward(const Tensor4<Real>& grad_out, Tensor4<Real>& grad_in);

/// Softmax across channels, independently per pixel.
template <typename Real>
void softmax_forward(const Tensor4<Real>& logits, Tensor4<Real>& probs);
template <typename Real>
void softmax_backward(const Tensor4<Real>& probs, const Tensor4<Real>& grad_probs, Tensor4<Real>& grad_logits);

/// Per-channel normalization state saved by the training forward pass.
template <typename Real>
struct BatchNormCache {
  std::vector<Real> mean;
  std::vector<Real> inv_std;
  Tensor4<Real> normalized;
};

/// Training mode: normalizes with batch statistics (biased variance) and
/// folds them into the running estimates with `momentum`.
template <typename Real>
void batchnorm_forward_train(const Tensor4<Real>& in, std::span<const Real> gamma, std::span<const Real> beta,
                             Real eps, Real momentum, std::span<Real> running_mean, std::span<Real> running_var,
                             Tensor4<Real>& out, BatchNormCache<Real>& cache);
template <typename Real>
void batchnorm_forward_eval(const Tensor4<Real>& in, std::span<const Real> gamma, std::span<const Real> beta,
                            Real eps, std::span<const Real> running_mean, std::span<const Real> running_var,
                            Tensor4<Real>& out);
/// grad_in overwritten; grad_gamma and grad_beta accumulated.
template <typename Real>
void batchnorm_backward(const Tensor4<Real>& grad_out, std::span<const Real> gamma, const BatchNormCache<Real>& cache,
                        Tensor4<Real>& grad_in, std::span<Real> grad_gamma, std::span<Real> grad_beta);

namespace reference {

template <typename Real>
void conv2d_forward(const Tensor4<Real>& in, std::span<const Real> weight, std::span<const Real> bias,
                    int out_channels, int ksize, Tensor4<Real>& out);
template <typename Real>
void conv2d_backward_input(const Tensor4<Real>& grad_out, std::span<const Real> weight, int in_channels, int ksize,
                           Tensor4<Real>& grad_in);
template <typename Real>
void conv2d_backward_params(const Tensor4<Real>& in, const Tensor4<Real>& grad_out, int ksize,
                            std::span<Real> grad_weight, std::span<Real> grad_bias);
template <typename Real>
void maxpool2_forward(const Tensor4<Real>& in, Tensor4<Real>& out, std::vector<int>& argmax);
template <typename Real>
void upsample2_forward(const Tensor4<Real>& in, Tensor4<Real>& out);
template <typename Real>
void softmax_forward(const Tensor4<Real>& logits, Tensor4<Real>& probs);

}  // namespace reference
}  // namespace surgseg::kernels
