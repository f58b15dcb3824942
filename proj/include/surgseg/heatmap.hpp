#pragma once

#include <array>
#include <string>
#include <vector>

#include "surgseg/evaluator.hpp"
#include "surgseg/image_io.hpp"
#include "surgseg/tensor.hpp"

namespace surgseg {

/// Piecewise-linear map from [0,1] to RGB. Control scalars are strictly
/// increasing and start at 0 and end at 1.
class Colormap {
 public:
  struct Stop {
    double at;
    std::array<double, 3> rgb;
  };

  explicit Colormap(std::vector<Stop> stops);
  /// blue, cyan, green, yellow, red at 0, 0.25, 0.5, 0.75, 1.
  static const Colormap& cool_to_hot();

  /// Input is clamped to [0,1].
  std::array<double, 3> operator()(double value) const;
  const std::vector<Stop>& stops() const { return stops_; }

 private:
  std::vector<Stop> stops_;
};

inline constexpr double kDefaultHeatmapAlpha = 0.6;

/// Per pixel: alpha * cmap(prob[class_id]) + (1 - alpha) * base. Throws
/// ShapeError when the dims disagree or class_id is out of range, and
/// ConfigError when alpha is outside [0,1].
Image render_heatmap(const ProbabilityMap& prob_map, ClassId class_id, const Image& base_image,
                     double alpha = kDefaultHeatmapAlpha, const Colormap& cmap = Colormap::cool_to_hot());

enum class HeatmapSelector { kClass, kPredicted, kMax };

/// Channel to render for a selector. kMax renders, per pixel, the largest
/// instrument probability and reports the predicted class for naming.
struct HeatmapChoice {
  ClassId class_id = 0;
  ProbabilityMap rendered;  // single channel
};

HeatmapChoice select_heatmap_channel(const ProbabilityMap& prob_map, const ClassTaxonomy& taxonomy,
                                     HeatmapSelector selector, ClassId class_id, Threshold tau);

/// `<image_id>_<class_name>.png`, with the class name normalized.
std::string heatmap_filename(const std::string& image_id, const std::string& class_name);

}  // namespace surgseg
