#include "surgseg/tensor.hpp"

#include <algorithm>

#include "surgseg/errors.hpp"

namespace surgseg {

std::size_t LabelMask::count(ClassId id) const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), id));
}

OneHotMask one_hot(const LabelMask& mask, int num_channels) {
  OneHotMask out(mask.height, mask.width, num_channels, 0.0f);
  const std::size_t plane = out.plane_size();
  for (std::size_t i = 0; i < plane; ++i) {
    const ClassId c = mask.labels[i];
    if (c < 0 || c >= num_channels) throw ShapeError("label " + std::to_string(c) + " outside one-hot range");
    out.values[static_cast<std::size_t>(c) * plane + i] = 1.0f;
  }
  return out;
}

LabelMask channel_argmax(const ClassMap& map) {
  LabelMask out(map.height, map.width, 0);
  const std::size_t plane = map.plane_size();
  for (std::size_t i = 0; i < plane; ++i) {
    int best = 0;
    float best_v = map.values[i];
    for (int c = 1; c < map.channels; ++c) {
      const float v = map.values[static_cast<std::size_t>(c) * plane + i];
      if (v > best_v) {
        best_v = v;
        best = c;
      }
    }
    out.labels[i] = best;
  }
  return out;
}

}  // namespace surgseg
