#include "surgseg/annotations.hpp"

#include <algorithm>
#include <filesystem>
#include <set>

#include <json.hpp>

#include "surgseg/errors.hpp"

namespace surgseg {
namespace {

using Json = nlohmann::ordered_json;

[[noreturn]] void record_error(const std::string& record, const std::string& what) {
  throw DataError("annotation record '" + record + "': " + what);
}

double number_field(const Json& obj, const char* key, const std::string& record) {
  auto it = obj.find(key);
  if (it == obj.end()) record_error(record, std::string("missing shape attribute '") + key + "'");
  if (it->is_number()) return it->get<double>();
  if (it->is_string()) {
    try {
      return std::stod(it->get<std::string>());
    } catch (const std::exception&) {
    }
  }
  record_error(record, std::string("shape attribute '") + key + "' is not numeric");
}

std::optional<int> optional_dimension(const Json& attrs, const char* key) {
  if (!attrs.is_object()) return std::nullopt;
  auto it = attrs.find(key);
  if (it == attrs.end()) return std::nullopt;
  if (it->is_number()) return it->get<int>();
  if (it->is_string()) {
    try {
      return std::stoi(it->get<std::string>());
    } catch (const std::exception&) {
    }
  }
  return std::nullopt;
}

// A class attribute is either a plain string or, for VIA checkbox and
// dropdown attributes, an object mapping option names to booleans.
std::optional<std::string> class_label(const Json& attrs, const std::string& key) {
  if (!attrs.is_object()) return std::nullopt;
  auto it = attrs.find(key);
  if (it == attrs.end()) return std::nullopt;
  if (it->is_string()) return it->get<std::string>();
  if (it->is_object()) {
    for (const auto& [option, on] : it->items()) {
      if (on.is_boolean() && on.get<bool>()) return option;
    }
  }
  return std::nullopt;
}

ClassId resolve_class(const std::string& label, const ClassTaxonomy& taxonomy, const std::string& record) {
  auto id = taxonomy.find(label);
  if (!id) record_error(record, "unknown class name '" + label + "'");
  return *id;
}

Region parse_shape(const Json& shape, ClassId class_id, int width, int height, const std::string& record) {
  if (!shape.is_object()) record_error(record, "shape_attributes is not an object");
  const std::string name = shape.value("name", "");
  const double w = width;
  const double h = height;
  if (name == "rect") {
    RectShape r{number_field(shape, "x", record), number_field(shape, "y", record),
                number_field(shape, "width", record), number_field(shape, "height", record)};
    if (!(r.width > 0.0) || !(r.height > 0.0)) record_error(record, "rectangle with non-positive size");
    const double x0 = std::max(0.0, r.x);
    const double y0 = std::max(0.0, r.y);
    const double x1 = std::min(w, r.x + r.width);
    const double y1 = std::min(h, r.y + r.height);
    if (x1 <= x0 || y1 <= y0) record_error(record, "region lies entirely outside the image");
    return Region{RectShape{x0, y0, x1 - x0, y1 - y0}, class_id};
  }
  if (name == "polygon" || name == "polyline") {
    const auto xs = shape.find("all_points_x");
    const auto ys = shape.find("all_points_y");
    if (xs == shape.end() || ys == shape.end() || !xs->is_array() || !ys->is_array()) {
      record_error(record, "polygon without all_points_x/all_points_y arrays");
    }
    if (xs->size() != ys->size()) record_error(record, "polygon coordinate arrays differ in length");
    if (xs->size() < 3) record_error(record, "polygon needs at least 3 vertices");
    PolygonShape poly;
    double min_x = w, min_y = h, max_x = 0.0, max_y = 0.0;
    for (std::size_t i = 0; i < xs->size(); ++i) {
      if (!(*xs)[i].is_number() || !(*ys)[i].is_number()) record_error(record, "non-numeric polygon vertex");
      const double px = (*xs)[i].get<double>();
      const double py = (*ys)[i].get<double>();
      min_x = std::min(min_x, px);
      min_y = std::min(min_y, py);
      max_x = std::max(max_x, px);
      max_y = std::max(max_y, py);
      poly.vertices.push_back({std::clamp(px, 0.0, w), std::clamp(py, 0.0, h)});
    }
    if (max_x <= 0.0 || max_y <= 0.0 || min_x >= w || min_y >= h) {
      record_error(record, "region lies entirely outside the image");
    }
    return Region{std::move(poly), class_id};
  }
  record_error(record, "unsupported region shape '" + name + "'");
}

}  // namespace

std::vector<AnnotatedImage> parse_via_annotations(std::string_view document, const ClassTaxonomy& taxonomy,
                                                  const ViaParseOptions& options) {
  Json root;
  try {
    root = Json::parse(document.begin(), document.end());
  } catch (const Json::parse_error& e) {
    // e.byte counts the bytes read, so the offending byte sits one earlier.
    const std::size_t offset = e.byte > 0 ? e.byte - 1 : 0;
    throw ParseError("malformed annotation JSON at byte " + std::to_string(offset) + ": " + e.what(), offset);
  }
  if (!root.is_object()) throw ParseError("annotation document must be a JSON object", 0);
  const Json* records = &root;
  if (auto it = root.find("_via_img_metadata"); it != root.end()) records = &*it;
  if (!records->is_object()) throw ParseError("_via_img_metadata must be an object", 0);

  std::vector<AnnotatedImage> out;
  std::set<std::string> seen;
  for (const auto& [key, rec] : records->items()) {
    if (!rec.is_object()) record_error(key, "record is not an object");
    const std::string filename = rec.value("filename", "");
    if (filename.empty()) record_error(key, "missing filename");
    const std::string& record = filename;
    if (!seen.insert(filename).second) record_error(record, "duplicate filename");

    AnnotatedImage image;
    image.image_id = filename;
    image.path = options.image_root.empty() ? filename
                                            : (std::filesystem::path(options.image_root) / filename).string();

    const Json file_attrs = rec.contains("file_attributes") ? rec["file_attributes"] : Json::object();
    auto width = optional_dimension(file_attrs, "width");
    auto height = optional_dimension(file_attrs, "height");
    if (!width || !height) {
      if (options.image_root.empty()) {
        record_error(record, "image dimensions unknown (no file_attributes width/height and no image root)");
      }
      const ImageSize size = probe_image_size(image.path);
      width = size.width;
      height = size.height;
    }
    if (*width <= 0 || *height <= 0) record_error(record, "non-positive image dimensions");
    image.width = *width;
    image.height = *height;

    std::optional<ClassId> file_class;
    if (auto label = class_label(file_attrs, options.class_attribute)) {
      file_class = resolve_class(*label, taxonomy, record);
    }

    std::vector<std::pair<const Json*, const Json*>> regions;  // (shape, attrs)
    if (auto it = rec.find("regions"); it != rec.end()) {
      if (!it->is_array() && !it->is_object()) record_error(record, "regions must be an array or object");
      for (const auto& [_, reg] : it->items()) {
        if (!reg.is_object() || !reg.contains("shape_attributes")) record_error(record, "region without shape_attributes");
        const Json* attrs = reg.contains("region_attributes") ? &reg["region_attributes"] : nullptr;
        regions.emplace_back(&reg["shape_attributes"], attrs);
      }
    }

    std::optional<ClassId> truth = file_class;
    for (const auto& [shape, attrs] : regions) {
      std::optional<std::string> label;
      if (attrs) label = class_label(*attrs, options.class_attribute);
      ClassId cls;
      if (label) {
        cls = resolve_class(*label, taxonomy, record);
      } else if (file_class) {
        cls = *file_class;
      } else {
        record_error(record, "region has no '" + options.class_attribute + "' attribute");
      }
      if (truth && *truth != cls) record_error(record, "regions name more than one class");
      truth = cls;
      image.regions.push_back(parse_shape(*shape, cls, image.width, image.height, record));
    }
    if (!truth) record_error(record, "no class label");
    image.truth_class = *truth;
    out.push_back(std::move(image));
  }
  return out;
}

std::vector<int> class_counts(const std::vector<AnnotatedImage>& images, const ClassTaxonomy& taxonomy) {
  std::vector<int> counts(static_cast<std::size_t>(taxonomy.num_instruments()), 0);
  for (const auto& image : images) {
    if (taxonomy.is_instrument(image.truth_class)) ++counts[static_cast<std::size_t>(image.truth_class)];
  }
  return counts;
}

}  // namespace surgseg
