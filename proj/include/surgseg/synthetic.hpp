#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "surgseg/manifest.hpp"

namespace surgseg {

struct SyntheticSpec {
  int num_classes = 5;
  int images_per_class = 30;
  int height = 128;
  int width = 128;
  std::uint64_t seed = 0;
};

/// Names of the parametric shapes, in class order.
const std::vector<std::string>& synthetic_shape_names();

/// Pixel-exact mask of one rendered shape (true = shape).
struct ShapeRender {
  Image image;
  std::vector<std::uint8_t> shape_mask;  // H * W
};

/// Renders one image of `shape_index` on a noisy green background.
/// generate_synthetic_dataset seeds image j of class c with
/// derive_seed(spec.seed, c * images_per_class + j).
ShapeRender render_synthetic_image(int shape_index, int height, int width, std::uint64_t seed);

/// Writes `out_dir/images/*.png`, `out_dir/annotations.json` (VIA region
/// export whose rectangles are the tight bounding boxes of the shapes)
/// and `out_dir/taxonomy.txt`. Returns the dataset as the VIA parser would
/// read it. Throws ConfigError for unsupported class counts.
Dataset generate_synthetic_dataset(const SyntheticSpec& spec, const std::string& out_dir);

}  // namespace surgseg
