#pragma once

#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "surgseg/image_io.hpp"
#include "surgseg/taxonomy.hpp"

namespace surgseg {

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

/// Axis-aligned box covering [x, x + width) x [y, y + height).
struct RectShape {
  double x = 0.0, y = 0.0, width = 0.0, height = 0.0;
  friend bool operator==(const RectShape&, const RectShape&) = default;
};

struct PolygonShape {
  std::vector<Point> vertices;
  friend bool operator==(const PolygonShape&, const PolygonShape&) = default;
};

struct Region {
  std::variant<RectShape, PolygonShape> shape;
  ClassId class_id = 0;
  friend bool operator==(const Region&, const Region&) = default;
};

/// One photograph with its labeled regions. The dataset holds a single
/// instrument per image, so every region carries `truth_class`.
struct AnnotatedImage {
  std::string image_id;
  std::string path;
  int width = 0;
  int height = 0;
  std::vector<Region> regions;
  ClassId truth_class = 0;
  friend bool operator==(const AnnotatedImage&, const AnnotatedImage&) = default;
};

struct ViaParseOptions {
  /// Attribute (region or file level) holding the class name.
  std::string class_attribute = "class";
  /// Directory the VIA filenames are relative to. When set, image
  /// dimensions missing from file_attributes are read from the files.
  std::string image_root;
};

/// Parses a VIA 2.x project file (`_via_img_metadata`) or region export
/// (top-level object of per-file records). Shapes "rect" and "polygon"
/// are supported; coordinates are clamped to the image bounds.
///
/// Throws ParseError (with byte offset) on malformed JSON and DataError on
/// unknown class names, regions entirely outside the image, or records
/// mixing several classes.
std::vector<AnnotatedImage> parse_via_annotations(std::string_view document,
                                                  const ClassTaxonomy& taxonomy,
                                                  const ViaParseOptions& options = {});

/// Number of images per instrument class, indexed by ClassId.
std::vector<int> class_counts(const std::vector<AnnotatedImage>& images, const ClassTaxonomy& taxonomy);

}  // namespace surgseg
