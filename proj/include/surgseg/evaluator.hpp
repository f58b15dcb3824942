#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "surgseg/annotations.hpp"
#include "surgseg/tensor.hpp"
#include "surgseg/unet.hpp"

namespace surgseg {

/// Probability cut in the open interval (0, 1).
class Threshold {
 public:
  explicit Threshold(double tau);
  double value() const { return tau_; }

 private:
  double tau_;
};

/// Set of pixel coordinates on an H x W grid.
class PixelSet {
 public:
  PixelSet(int height, int width) : height_(height), width_(width), member_(static_cast<std::size_t>(height) * width, 0) {}

  void insert(int y, int x);
  bool contains(int y, int x) const { return member_[index(y, x)] != 0; }
  std::size_t size() const { return count_; }
  bool empty() const { return count_ == 0; }
  int height() const { return height_; }
  int width() const { return width_; }
  std::span<const std::uint8_t> membership() const { return member_; }

 private:
  std::size_t index(int y, int x) const { return static_cast<std::size_t>(y) * width_ + x; }
  int height_;
  int width_;
  std::vector<std::uint8_t> member_;
  std::size_t count_ = 0;
};

/// Pixels where channel `class_id` strictly exceeds tau.
PixelSet positive_pixels(const ProbabilityMap& map, ClassId class_id, Threshold tau);

/// Pixels of `mask` labeled `class_id`.
PixelSet mask_pixels(const LabelMask& mask, ClassId class_id);

struct Classification {
  ClassId predicted = 0;
  /// True when no instrument pixel exceeded tau and the decision fell
  /// back to the largest summed probability.
  bool fallback = false;
};

/// Area-argmax over instrument channels (background excluded): the class
/// with the most suprathreshold pixels, ties to the lowest index. With no
/// suprathreshold instrument pixel, the instrument channel with the largest
/// probability mass wins instead.
Classification classify_image(const ProbabilityMap& map, const ClassTaxonomy& taxonomy, Threshold tau);

/// |A & B| / |A | B|, with iou(empty, empty) = 0. Throws ShapeError if the
/// grids differ.
double iou(const PixelSet& a, const PixelSet& b);

struct EvalRecord {
  std::string image_id;
  ClassId truth_class = 0;
  ClassId predicted_class = 0;
  bool correct = false;
  double iou = 0.0;
  int fold_index = 0;
  bool fallback = false;
  friend bool operator==(const EvalRecord&, const EvalRecord&) = default;
};

/// Scores one prediction against the rasterized ground truth: the class
/// decision from classify_image and the IoU of the truth-class channel's
/// positive pixels with the truth-class mask pixels.
EvalRecord evaluate_prediction(const std::string& image_id, const ProbabilityMap& map, const LabelMask& truth_mask,
                               ClassId truth_class, const ClassTaxonomy& taxonomy, Threshold tau);

/// Loads the image at the model resolution, runs the model and scores it.
EvalRecord evaluate_image(const UNet& model, const AnnotatedImage& image, const ClassTaxonomy& taxonomy,
                          Threshold tau);

/// Per-image records, tab-separated, with a header line:
/// image_id fold truth predicted correct iou tau fallback
std::string format_records(const std::vector<EvalRecord>& records, const ClassTaxonomy& taxonomy, Threshold tau);
/// Inverse of format_records; returns the records and the tau column value.
std::vector<EvalRecord> parse_records(const std::string& text, const ClassTaxonomy& taxonomy, double* tau = nullptr);

}  // namespace surgseg
