#pragma once

#include <random>
#include <string>
#include <utility>

#include "surgseg/image_io.hpp"
#include "surgseg/tensor.hpp"

namespace surgseg {

/// Bilinear resize with pixel-center alignment: destination pixel x samples
/// source coordinate (x + 0.5) * src/dst - 0.5, clamped at the borders.
Image resize_bilinear(const Image& src, int height, int width);
LabelMask resize_nearest(const LabelMask& src, int height, int width);

/// Center-crops to the target aspect ratio, then bilinear-resizes.
Image preprocess(const Image& src, ImageSize target);

/// Decode, scale to [0,1], center-crop and resize. Throws DataError naming
/// the path when the file cannot be read.
Image load_and_preprocess(const std::string& path, ImageSize target);

struct AugmentParams {
  double crop_min = 0.6;
  double crop_max = 1.0;
};

void validate(const AugmentParams& params);

/// Random axis-aligned crop whose side lengths are a uniformly drawn
/// fraction of the input, resized back to the input resolution. The image
/// is resampled bilinearly and the mask by nearest neighbour. Throws
/// ConfigError if the crop would be smaller than 2x2.
std::pair<Image, LabelMask> augment(const Image& image, const LabelMask& mask, std::mt19937_64& rng,
                                    const AugmentParams& params);

}  // namespace surgseg
