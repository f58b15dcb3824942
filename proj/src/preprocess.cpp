#include "surgseg/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include "surgseg/errors.hpp"
#include "surgseg/raster.hpp"

namespace surgseg {
namespace {

struct Tap {
  int lo;
  int hi;
  float frac;
};

std::vector<Tap> bilinear_taps(int src, int dst) {
  std::vector<Tap> taps(static_cast<std::size_t>(dst));
  const double scale = static_cast<double>(src) / dst;
  for (int i = 0; i < dst; ++i) {
    double s = (i + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(src - 1));
    const int lo = static_cast<int>(std::floor(s));
    const int hi = std::min(lo + 1, src - 1);
    taps[static_cast<std::size_t>(i)] = {lo, hi, static_cast<float>(s - lo)};
  }
  return taps;
}

Image crop(const Image& src, const CropWindow& win) {
  Image out(win.height, win.width);
  for (int y = 0; y < win.height; ++y) {
    const float* row = &src.pixels[(static_cast<std::size_t>(y + win.y0) * src.width + win.x0) * 3];
    std::copy(row, row + static_cast<std::size_t>(win.width) * 3, &out.pixels[static_cast<std::size_t>(y) * win.width * 3]);
  }
  return out;
}

LabelMask crop(const LabelMask& src, const CropWindow& win) {
  LabelMask out(win.height, win.width, 0);
  for (int y = 0; y < win.height; ++y) {
    for (int x = 0; x < win.width; ++x) out.at(y, x) = src.at(y + win.y0, x + win.x0);
  }
  return out;
}

}  // namespace

Image resize_bilinear(const Image& src, int height, int width) {
  if (height <= 0 || width <= 0 || src.height <= 0 || src.width <= 0) {
    throw ShapeError("resize needs non-empty source and target");
  }
  if (height == src.height && width == src.width) return src;
  const auto ty = bilinear_taps(src.height, height);
  const auto tx = bilinear_taps(src.width, width);
  Image out(height, width);
  for (int y = 0; y < height; ++y) {
    const Tap& v = ty[static_cast<std::size_t>(y)];
    for (int x = 0; x < width; ++x) {
      const Tap& h = tx[static_cast<std::size_t>(x)];
      for (int c = 0; c < 3; ++c) {
        const float a = src.at(v.lo, h.lo, c);
        const float b = src.at(v.lo, h.hi, c);
        const float d = src.at(v.hi, h.lo, c);
        const float e = src.at(v.hi, h.hi, c);
        const float top = a + h.frac * (b - a);
        const float bottom = d + h.frac * (e - d);
        out.at(y, x, c) = top + v.frac * (bottom - top);
      }
    }
  }
  return out;
}

LabelMask resize_nearest(const LabelMask& src, int height, int width) {
  if (height <= 0 || width <= 0) throw ShapeError("resize needs a non-empty target");
  if (height == src.height && width == src.width) return src;
  LabelMask out(height, width, 0);
  for (int y = 0; y < height; ++y) {
    const int sy = std::min(src.height - 1, static_cast<int>((y + 0.5) * src.height / height));
    for (int x = 0; x < width; ++x) {
      const int sx = std::min(src.width - 1, static_cast<int>((x + 0.5) * src.width / width));
      out.at(y, x) = src.at(sy, sx);
    }
  }
  return out;
}

Image preprocess(const Image& src, ImageSize target) {
  const CropWindow win = center_crop_window({src.height, src.width}, target);
  if (win.x0 == 0 && win.y0 == 0 && win.width == src.width && win.height == src.height) {
    return resize_bilinear(src, target.height, target.width);
  }
  return resize_bilinear(crop(src, win), target.height, target.width);
}

Image load_and_preprocess(const std::string& path, ImageSize target) {
  return preprocess(to_float(read_image(path)), target);
}

void validate(const AugmentParams& params) {
  if (!(params.crop_min > 0.0) || !(params.crop_max <= 1.0) || params.crop_min > params.crop_max) {
    throw ConfigError("crop-scale range must satisfy 0 < min <= max <= 1");
  }
}

std::pair<Image, LabelMask> augment(const Image& image, const LabelMask& mask, std::mt19937_64& rng,
                                    const AugmentParams& params) {
  validate(params);
  if (image.height != mask.height || image.width != mask.width) {
    throw ShapeError("augment: image and mask dimensions differ");
  }
  const int min_side = std::min(image.height, image.width);
  if (std::lround(params.crop_min * min_side) < 2) throw ConfigError("augment: crop smaller than 2x2 pixels");

  const double scale = params.crop_min == params.crop_max
                           ? params.crop_min
                           : std::uniform_real_distribution<double>(params.crop_min, params.crop_max)(rng);
  CropWindow win;
  win.height = std::clamp(static_cast<int>(std::lround(scale * image.height)), 2, image.height);
  win.width = std::clamp(static_cast<int>(std::lround(scale * image.width)), 2, image.width);
  win.y0 = std::uniform_int_distribution<int>(0, image.height - win.height)(rng);
  win.x0 = std::uniform_int_distribution<int>(0, image.width - win.width)(rng);
  if (win.height == image.height && win.width == image.width) return {image, mask};
  return {resize_bilinear(crop(image, win), image.height, image.width),
          resize_nearest(crop(mask, win), image.height, image.width)};
}

}  // namespace surgseg
