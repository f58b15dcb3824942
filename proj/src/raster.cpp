#include "surgseg/raster.hpp"

#include <algorithm>
#include <cmath>

#include <spdlog/spdlog.h>

#include "surgseg/errors.hpp"

namespace surgseg {
namespace {

// Pixels whose centers fall in the half-open span [lo, hi).
std::pair<int, int> center_span(double lo, double hi, int limit) {
  const int first = static_cast<int>(std::ceil(lo - 0.5));
  const int last = static_cast<int>(std::ceil(hi - 0.5));
  return {std::clamp(first, 0, limit), std::clamp(last, 0, limit)};
}

std::size_t paint_span(LabelMask& mask, int y, int x_begin, int x_end, ClassId cls, ClassId background) {
  std::size_t overwritten = 0;
  for (int x = x_begin; x < x_end; ++x) {
    ClassId& px = mask.at(y, x);
    if (px != background && px != cls) ++overwritten;
    px = cls;
  }
  return overwritten;
}

}  // namespace

CropWindow center_crop_window(ImageSize source, ImageSize target) {
  if (source.height <= 0 || source.width <= 0 || target.height <= 0 || target.width <= 0) {
    throw ConfigError("crop window needs positive dimensions");
  }
  CropWindow win{0, 0, source.width, source.height};
  const long long lhs = static_cast<long long>(source.width) * target.height;
  const long long rhs = static_cast<long long>(source.height) * target.width;
  if (lhs > rhs) {
    win.width = std::max(1, static_cast<int>(std::lround(static_cast<double>(source.height) * target.width / target.height)));
    win.x0 = (source.width - win.width) / 2;
  } else if (lhs < rhs) {
    win.height = std::max(1, static_cast<int>(std::lround(static_cast<double>(source.width) * target.height / target.width)));
    win.y0 = (source.height - win.height) / 2;
  }
  return win;
}

std::size_t fill_region(LabelMask& mask, const Region& region, ClassId background_id) {
  std::size_t overwritten = 0;
  if (const auto* rect = std::get_if<RectShape>(&region.shape)) {
    const auto [x0, x1] = center_span(rect->x, rect->x + rect->width, mask.width);
    const auto [y0, y1] = center_span(rect->y, rect->y + rect->height, mask.height);
    for (int y = y0; y < y1; ++y) overwritten += paint_span(mask, y, x0, x1, region.class_id, background_id);
    return overwritten;
  }
  const auto& verts = std::get<PolygonShape>(region.shape).vertices;
  if (verts.size() < 3) return 0;
  std::vector<double> crossings;
  for (int y = 0; y < mask.height; ++y) {
    const double yc = y + 0.5;
    crossings.clear();
    for (std::size_t i = 0, j = verts.size() - 1; i < verts.size(); j = i++) {
      const Point& a = verts[i];
      const Point& b = verts[j];
      if ((a.y > yc) != (b.y > yc)) {
        crossings.push_back((b.x - a.x) * (yc - a.y) / (b.y - a.y) + a.x);
      }
    }
    std::sort(crossings.begin(), crossings.end());
    for (std::size_t k = 0; k + 1 < crossings.size(); k += 2) {
      const auto [x0, x1] = center_span(crossings[k], crossings[k + 1], mask.width);
      overwritten += paint_span(mask, y, x0, x1, region.class_id, background_id);
    }
  }
  return overwritten;
}

LabelMask rasterize_mask(const AnnotatedImage& image, ImageSize dims, ClassId background_id) {
  LabelMask mask(dims.height, dims.width, background_id);
  if (image.regions.empty()) return mask;
  const CropWindow win = center_crop_window({image.height, image.width}, dims);
  const double sx = static_cast<double>(dims.width) / win.width;
  const double sy = static_cast<double>(dims.height) / win.height;
  std::size_t overwritten = 0;
  for (const Region& region : image.regions) {
    Region mapped = region;
    if (auto* rect = std::get_if<RectShape>(&mapped.shape)) {
      rect->x = (rect->x - win.x0) * sx;
      rect->y = (rect->y - win.y0) * sy;
      rect->width *= sx;
      rect->height *= sy;
    } else {
      for (Point& p : std::get<PolygonShape>(mapped.shape).vertices) {
        p.x = (p.x - win.x0) * sx;
        p.y = (p.y - win.y0) * sy;
      }
    }
    overwritten += fill_region(mask, mapped, background_id);
  }
  if (overwritten > 0) {
    spdlog::warn("image '{}': overlapping regions, {} pixels taken by the later region", image.image_id, overwritten);
  }
  return mask;
}

}  // namespace surgseg
