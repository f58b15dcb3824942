#include "surgseg/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <random>

#include <json.hpp>

#include "surgseg/errors.hpp"
#include "surgseg/experiment.hpp"
#include "surgseg/fileutil.hpp"
#include "surgseg/image_io.hpp"

namespace surgseg {
namespace {

// Membership tests in the shape's local frame; every shape fits [-1,1]^2.
bool inside_shape(int shape, double u, double v) {
  const double au = std::abs(u);
  const double av = std::abs(v);
  if (au > 1.0 || av > 1.0) return false;
  switch (shape) {
    case 0:  // bar
      return av <= 0.3;
    case 1:  // disk
      return u * u + v * v <= 1.0;
    case 2:  // L-shape
      return u <= -0.2 || v >= 0.2;
    case 3: {  // ring
      const double r2 = u * u + v * v;
      return r2 <= 1.0 && r2 >= 0.25;
    }
    case 4:  // cross
      return au <= 0.3 || av <= 0.3;
    case 5:  // triangle
      return au <= (v + 1.0) / 2.0;
    case 6:  // T-shape
      return v <= -0.4 || au <= 0.3;
    case 7:  // frame
      return std::max(au, av) >= 0.55;
    default:
      return false;
  }
}

}  // namespace

const std::vector<std::string>& synthetic_shape_names() {
  static const std::vector<std::string> names = {"Bar",   "Disk",     "L-Shape", "Ring",
                                                 "Cross", "Triangle", "T-Shape", "Frame"};
  return names;
}

ShapeRender render_synthetic_image(int shape_index, int height, int width, std::uint64_t seed) {
  if (shape_index < 0 || shape_index >= static_cast<int>(synthetic_shape_names().size())) {
    throw ConfigError("unknown synthetic shape index " + std::to_string(shape_index));
  }
  std::mt19937_64 rng(seed);
  auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  std::normal_distribution<double> noise(0.0, 1.0);

  const double side = std::min(height, width);
  const double radius = uniform(0.2, 0.32) * side;
  const double margin = radius * 1.45;
  auto center = [&](double extent) {
    return extent - 2 * margin > 0 ? uniform(margin, extent - margin) : extent / 2;
  };
  const double cx = center(width);
  const double cy = center(height);
  const double theta = std::floor(uniform(0.0, 4.0)) * std::numbers::pi / 2 + uniform(-0.45, 0.45);
  const double stretch = uniform(0.85, 1.15);
  const double cos_t = std::cos(theta);
  const double sin_t = std::sin(theta);

  // Green towel: base colour, two low-frequency ripples, pixel noise.
  const double base_r = uniform(0.08, 0.18);
  const double base_g = uniform(0.38, 0.50);
  const double base_b = uniform(0.18, 0.28);
  const double fx = uniform(0.03, 0.09), fy = uniform(0.03, 0.09);
  const double px = uniform(0.0, 6.28), py = uniform(0.0, 6.28);
  // Brushed steel: grey level, shading along the local u axis.
  const double steel = uniform(0.55, 0.80);

  ShapeRender out{Image(height, width), std::vector<std::uint8_t>(static_cast<std::size_t>(height) * width, 0)};
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double dx = x + 0.5 - cx;
      const double dy = y + 0.5 - cy;
      const double u = (dx * cos_t + dy * sin_t) / (radius * stretch);
      const double v = (-dx * sin_t + dy * cos_t) / radius;
      double rgb[3];
      if (inside_shape(shape_index, u, v)) {
        out.shape_mask[static_cast<std::size_t>(y) * width + x] = 1;
        const double shade = steel * (0.85 + 0.15 * u);
        rgb[0] = shade + 0.03 * noise(rng);
        rgb[1] = shade + 0.03 * noise(rng);
        rgb[2] = shade + 0.04 + 0.03 * noise(rng);
      } else {
        const double ripple = 0.05 * std::sin(fx * x + px) * std::cos(fy * y + py);
        rgb[0] = base_r + ripple + 0.04 * noise(rng);
        rgb[1] = base_g + ripple + 0.04 * noise(rng);
        rgb[2] = base_b + ripple + 0.04 * noise(rng);
      }
      for (int c = 0; c < 3; ++c) out.image.at(y, x, c) = static_cast<float>(std::clamp(rgb[c], 0.0, 1.0));
    }
  }
  return out;
}

Dataset generate_synthetic_dataset(const SyntheticSpec& spec, const std::string& out_dir) {
  const auto& names = synthetic_shape_names();
  if (spec.num_classes < 2 || spec.num_classes > static_cast<int>(names.size())) {
    throw ConfigError("synthetic dataset supports 2.." + std::to_string(names.size()) + " classes, got " +
                      std::to_string(spec.num_classes));
  }
  if (spec.images_per_class < 2) throw ConfigError("synthetic dataset needs >= 2 images per class");
  if (spec.height < 8 || spec.width < 8) throw ConfigError("synthetic images must be at least 8x8");

  namespace fs = std::filesystem;
  const fs::path root(out_dir);
  const fs::path image_dir = root / "images";
  fs::create_directories(image_dir);

  const std::vector<std::string> class_names(names.begin(), names.begin() + spec.num_classes);
  nlohmann::ordered_json via = nlohmann::ordered_json::object();
  for (int c = 0; c < spec.num_classes; ++c) {
    for (int j = 0; j < spec.images_per_class; ++j) {
      const std::uint64_t index = static_cast<std::uint64_t>(c) * spec.images_per_class + j;
      const ShapeRender render = render_synthetic_image(c, spec.height, spec.width, derive_seed(spec.seed, index));
      int x0 = spec.width, y0 = spec.height, x1 = -1, y1 = -1;
      for (int y = 0; y < spec.height; ++y) {
        for (int x = 0; x < spec.width; ++x) {
          if (!render.shape_mask[static_cast<std::size_t>(y) * spec.width + x]) continue;
          x0 = std::min(x0, x);
          y0 = std::min(y0, y);
          x1 = std::max(x1, x);
          y1 = std::max(y1, y);
        }
      }
      char filename[96];
      std::snprintf(filename, sizeof filename, "%s_%03d.png", normalize_class_name(class_names[c]).c_str(), j);
      const auto png = encode_png(to_rgb8(render.image));
      write_file_atomic((image_dir / filename).string(), png);

      nlohmann::ordered_json region;
      region["shape_attributes"] = {{"name", "rect"}, {"x", x0}, {"y", y0}, {"width", x1 - x0 + 1},
                                    {"height", y1 - y0 + 1}};
      region["region_attributes"] = {{"class", class_names[c]}};
      nlohmann::ordered_json record;
      record["filename"] = filename;
      record["size"] = png.size();
      record["regions"] = nlohmann::ordered_json::array({region});
      record["file_attributes"] = {{"width", spec.width}, {"height", spec.height}};
      via[std::string(filename) + std::to_string(png.size())] = std::move(record);
    }
  }
  const std::string document = via.dump(1) + "\n";
  write_file_atomic((root / "annotations.json").string(), document);
  std::string taxonomy_text;
  for (const auto& n : class_names) taxonomy_text += n + "\n";
  write_file_atomic((root / "taxonomy.txt").string(), taxonomy_text);

  Dataset dataset{ClassTaxonomy(class_names), {}};
  ViaParseOptions opts;
  opts.image_root = image_dir.string();
  dataset.images = parse_via_annotations(document, dataset.taxonomy, opts);
  return dataset;
}

}  // namespace surgseg
