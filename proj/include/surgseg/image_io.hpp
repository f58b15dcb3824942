#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "surgseg/tensor.hpp"

namespace surgseg {

/// 8-bit interleaved RGB raster as decoded from disk.
struct Rgb8Image {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;  // H * W * 3

  friend bool operator==(const Rgb8Image&, const Rgb8Image&) = default;
};

struct ImageSize {
  int height = 0;
  int width = 0;
};

/// Decodes PNG or JPEG (detected by signature) to RGB. Grayscale and alpha
/// inputs are converted. Throws DataError naming the path on failure.
Rgb8Image read_image(const std::string& path);

/// Reads only the header to obtain dimensions.
ImageSize probe_image_size(const std::string& path);

std::vector<std::uint8_t> encode_png(const Rgb8Image& image);
/// Encodes and writes atomically.
void write_png(const std::string& path, const Rgb8Image& image);

/// Scales [0,1] floats to bytes with rounding and clamping.
Rgb8Image to_rgb8(const Image& image);
/// Divides by 255.
Image to_float(const Rgb8Image& image);

}  // namespace surgseg
