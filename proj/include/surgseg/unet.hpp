#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "surgseg/kernels.hpp"
#include "surgseg/tensor.hpp"

namespace surgseg {

struct UNetConfig {
  int height = 256;
  int width = 256;
  int depth = 4;           // number of 2x downsampling stages
  int base_channels = 16;  // features at the first stage, doubled per stage
  int num_classes = 28;
  bool batch_norm = false;
  std::uint64_t init_seed = 0;

  /// Throws ConfigError unless H and W are divisible by 2^depth and
  /// num_classes >= 2.
  void validate() const;

  /// 256x256, depth 4, base 16.
  static UNetConfig full();
  /// Reduced resolution and width for CPU runs on the synthetic dataset.
  static UNetConfig desk();
  friend bool operator==(const UNetConfig&, const UNetConfig&) = default;
};

enum class LayerPart { kEncoder, kDecoder };

struct LayerSpec {
  std::string name;
  int kernel = 3;
  int in_channels = 0;
  int out_channels = 0;
  LayerPart part = LayerPart::kEncoder;
  bool batch_norm = false;

  /// Convolution weights and bias: k*k*in*out + out, plus 2*out when
  /// followed by batch normalization.
  std::size_t param_count() const;
};

/// A named slice of the flat parameter (or buffer) vector.
struct ParamTensor {
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
  LayerPart part = LayerPart::kEncoder;
};

struct ShapeTrace {
  std::string layer;
  int in_channels, in_height, in_width;
  int out_channels, out_height, out_width;
};

/// Classic symmetric U-Net. Contracting stages apply two 3x3 conv + ReLU
/// blocks then 2x2 max pooling; the bottleneck doubles channels once more;
/// each expanding stage upsamples (nearest) and convolves, concatenates the
/// matching encoder output and applies two more 3x3 blocks. A 1x1 head maps
/// to num_classes channels followed by a per-pixel softmax.
///
/// Parameters live in one flat vector (and gradients in a parallel one);
/// ParamTensor entries name the slices. Inputs and outputs are NCHW.
template <typename Real>
class BasicUNet {
 public:
  explicit BasicUNet(const UNetConfig& config);

  const UNetConfig& config() const { return config_; }
  const std::vector<LayerSpec>& layers() const { return layers_; }
  const std::vector<ParamTensor>& parameter_tensors() const { return param_tensors_; }
  const std::vector<ParamTensor>& buffer_tensors() const { return buffer_tensors_; }

  std::size_t parameter_count() const { return params_.size(); }
  std::span<Real> parameters() { return params_; }
  std::span<const Real> parameters() const { return params_; }
  std::span<Real> gradients() { return grads_; }
  std::span<const Real> gradients() const { return grads_; }
  /// Batch-norm running statistics (empty without batch norm).
  std::span<Real> buffers() { return buffers_; }
  std::span<const Real> buffers() const { return buffers_; }

  /// Inference forward pass; returns per-pixel class probabilities.
  /// Throws ShapeError if the input is not (N, 3, H, W) for the configured
  /// resolution.
  Tensor4<Real> forward(const Tensor4<Real>& input) const;

  /// Training forward pass: batch statistics for batch norm, activations
  /// kept for backward(). The returned reference is valid until the next
  /// call.
  const Tensor4<Real>& forward_train(const Tensor4<Real>& input);

  /// Accumulates parameter gradients for dLoss/dProbabilities of the last
  /// forward_train call.
  void backward(const Tensor4<Real>& grad_probs);
  void zero_grad();

  /// Per-layer input/output dims for a batch of one.
  std::vector<ShapeTrace> trace_shapes() const;

 private:
  struct LayerSlots {
    std::size_t weight = 0, bias = 0, gamma = 0, beta = 0;  // offsets into params_
    std::size_t mean = 0, var = 0;                           // offsets into buffers_
  };
  struct Cache {
    std::vector<Tensor4<Real>> conv_in;
    std::vector<Tensor4<Real>> conv_out;
    std::vector<kernels::BatchNormCache<Real>> bn;
    std::vector<std::vector<int>> pool_argmax;
    Tensor4<Real> probs;
    bool valid = false;
  };

  void build_layers();
  Tensor4<Real> run_forward(const Tensor4<Real>& input, Cache* cache, std::span<Real> running,
                            std::vector<ShapeTrace>* trace) const;
  Tensor4<Real> conv_unit(std::size_t layer, const Tensor4<Real>& in, Cache* cache, std::span<Real> running,
                          std::vector<ShapeTrace>* trace) const;
  Tensor4<Real> conv_unit_backward(std::size_t layer, Tensor4<Real> grad, bool need_input_grad);

  UNetConfig config_;
  std::vector<LayerSpec> layers_;
  std::vector<LayerSlots> slots_;
  std::vector<ParamTensor> param_tensors_;
  std::vector<ParamTensor> buffer_tensors_;
  std::vector<Real> params_;
  std::vector<Real> grads_;
  std::vector<Real> buffers_;
  Cache cache_;
};

using UNet = BasicUNet<float>;

/// Packs HWC images into an (N, 3, H, W) tensor.
template <typename Real>
Tensor4<Real> images_to_tensor(std::span<const Image> images);
/// Splits an (N, C, H, W) tensor into per-image maps.
template <typename Real>
std::vector<ClassMap> tensor_to_maps(const Tensor4<Real>& t);
template <typename Real>
Tensor4<Real> maps_to_tensor(std::span<const ClassMap> maps);

/// Convenience wrapper: images in, probability maps out.
std::vector<ProbabilityMap> predict(const UNet& model, std::span<const Image> images);

}  // namespace surgseg
