#include "surgseg/heatmap.hpp"

#include <algorithm>

#include "surgseg/errors.hpp"

namespace surgseg {

Colormap::Colormap(std::vector<Stop> stops) : stops_(std::move(stops)) {
  if (stops_.size() < 2 || stops_.front().at != 0.0 || stops_.back().at != 1.0) {
    throw ConfigError("colormap needs control points at 0 and 1");
  }
  for (std::size_t i = 1; i < stops_.size(); ++i) {
    if (!(stops_[i].at > stops_[i - 1].at)) throw ConfigError("colormap control points must strictly increase");
  }
}

const Colormap& Colormap::cool_to_hot() {
  static const Colormap map({{0.0, {0, 0, 1}}, {0.25, {0, 1, 1}}, {0.5, {0, 1, 0}}, {0.75, {1, 1, 0}}, {1.0, {1, 0, 0}}});
  return map;
}

std::array<double, 3> Colormap::operator()(double value) const {
  const double v = std::clamp(value, 0.0, 1.0);
  std::size_t hi = 1;
  while (hi + 1 < stops_.size() && stops_[hi].at < v) ++hi;
  const Stop& a = stops_[hi - 1];
  const Stop& b = stops_[hi];
  const double f = (v - a.at) / (b.at - a.at);
  std::array<double, 3> out;
  for (int c = 0; c < 3; ++c) out[c] = a.rgb[c] + f * (b.rgb[c] - a.rgb[c]);
  return out;
}

Image render_heatmap(const ProbabilityMap& prob_map, ClassId class_id, const Image& base_image, double alpha,
                     const Colormap& cmap) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("heatmap alpha must lie in [0,1]");
  if (prob_map.height != base_image.height || prob_map.width != base_image.width) {
    throw ShapeError("heatmap: probability map is " + std::to_string(prob_map.height) + "x" +
                     std::to_string(prob_map.width) + " but base image is " + std::to_string(base_image.height) +
                     "x" + std::to_string(base_image.width));
  }
  if (class_id < 0 || class_id >= prob_map.channels) {
    throw ShapeError("heatmap: class " + std::to_string(class_id) + " outside " + std::to_string(prob_map.channels) +
                     " channels");
  }
  Image out(base_image.height, base_image.width);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      const auto rgb = cmap(prob_map.at(y, x, class_id));
      for (int c = 0; c < 3; ++c) {
        out.at(y, x, c) = static_cast<float>(alpha * rgb[c] + (1.0 - alpha) * base_image.at(y, x, c));
      }
    }
  }
  return out;
}

HeatmapChoice select_heatmap_channel(const ProbabilityMap& prob_map, const ClassTaxonomy& taxonomy,
                                     HeatmapSelector selector, ClassId class_id, Threshold tau) {
  if (prob_map.channels != taxonomy.num_channels()) {
    throw ShapeError("heatmap: map has " + std::to_string(prob_map.channels) + " channels, taxonomy " +
                     std::to_string(taxonomy.num_channels()));
  }
  HeatmapChoice choice;
  choice.rendered = ProbabilityMap(prob_map.height, prob_map.width, 1);
  if (selector == HeatmapSelector::kClass) {
    if (class_id < 0 || class_id >= prob_map.channels) throw ConfigError("heatmap: invalid class id");
    choice.class_id = class_id;
  } else {
    choice.class_id = classify_image(prob_map, taxonomy, tau).predicted;
  }
  if (selector == HeatmapSelector::kMax) {
    for (int y = 0; y < prob_map.height; ++y) {
      for (int x = 0; x < prob_map.width; ++x) {
        float best = 0.0f;
        for (int c = 0; c < taxonomy.num_instruments(); ++c) best = std::max(best, prob_map.at(y, x, c));
        choice.rendered.at(y, x, 0) = best;
      }
    }
  } else {
    auto src = prob_map.channel(choice.class_id);
    std::copy(src.begin(), src.end(), choice.rendered.values.begin());
  }
  return choice;
}

std::string heatmap_filename(const std::string& image_id, const std::string& class_name) {
  std::string name = normalize_class_name(class_name);
  std::replace(name.begin(), name.end(), ' ', '_');
  return image_id + "_" + name + ".png";
}

}  // namespace surgseg
