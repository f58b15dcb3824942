#pragma once

#include "surgseg/annotations.hpp"
#include "surgseg/tensor.hpp"

namespace surgseg {

/// Integer source window kept by the aspect-preserving center crop.
struct CropWindow {
  int x0 = 0;
  int y0 = 0;
  int width = 0;
  int height = 0;
  friend bool operator==(const CropWindow&, const CropWindow&) = default;
};

/// Largest centered window of `source` with the aspect ratio of `target`.
CropWindow center_crop_window(ImageSize source, ImageSize target);

/// Maps the image's regions through the center crop and scale used by
/// preprocessing, then fills them at `dims`. Pixels are sampled at their
/// centers: rectangles are half-open, polygons use the even-odd rule.
/// Overlapping regions resolve to the later region (logged as a warning).
LabelMask rasterize_mask(const AnnotatedImage& image, ImageSize dims, ClassId background_id);

/// Fills one shape, already expressed in target pixel coordinates, into
/// `mask`. Returns the number of pixels that were previously non-background
/// and got overwritten.
std::size_t fill_region(LabelMask& mask, const Region& region, ClassId background_id);

}  // namespace surgseg
