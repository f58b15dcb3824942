#include "surgseg/manifest.hpp"

#include <charconv>
#include <cstdio>
#include <sstream>

#include "surgseg/errors.hpp"
#include "surgseg/fileutil.hpp"

namespace surgseg {
namespace {

constexpr std::string_view kHeader = "#surgseg-manifest v1";
constexpr std::string_view kTaxonomyTag = "#taxonomy";

void append_number(std::string& out, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

std::string format_regions(const AnnotatedImage& image) {
  std::string out;
  for (std::size_t i = 0; i < image.regions.size(); ++i) {
    if (i) out.push_back(';');
    const Region& r = image.regions[i];
    if (const auto* rect = std::get_if<RectShape>(&r.shape)) {
      out += "rect:";
      append_number(out, rect->x);
      out.push_back(',');
      append_number(out, rect->y);
      out.push_back(',');
      append_number(out, rect->width);
      out.push_back(',');
      append_number(out, rect->height);
    } else {
      out += "poly:";
      const auto& verts = std::get<PolygonShape>(r.shape).vertices;
      for (std::size_t k = 0; k < verts.size(); ++k) {
        if (k) out.push_back(',');
        append_number(out, verts[k].x);
        out.push_back(',');
        append_number(out, verts[k].y);
      }
    }
  }
  return out;
}

std::vector<std::string> split(std::string_view text, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = text.find(sep, start);
    parts.emplace_back(text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

double parse_double(const std::string& s, int line_no) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw DataError("manifest line " + std::to_string(line_no) + ": bad number '" + s + "'");
  }
  return v;
}

std::vector<double> parse_numbers(const std::string& s, int line_no) {
  std::vector<double> out;
  for (const auto& part : split(s, ',')) out.push_back(parse_double(part, line_no));
  return out;
}

std::vector<Region> parse_regions(const std::string& field, ClassId cls, int line_no) {
  std::vector<Region> regions;
  if (field.empty()) return regions;
  for (const auto& item : split(field, ';')) {
    if (item.rfind("rect:", 0) == 0) {
      auto v = parse_numbers(item.substr(5), line_no);
      if (v.size() != 4) throw DataError("manifest line " + std::to_string(line_no) + ": rect needs 4 numbers");
      regions.push_back({RectShape{v[0], v[1], v[2], v[3]}, cls});
    } else if (item.rfind("poly:", 0) == 0) {
      auto v = parse_numbers(item.substr(5), line_no);
      if (v.size() < 6 || v.size() % 2) {
        throw DataError("manifest line " + std::to_string(line_no) + ": polygon needs >= 3 vertex pairs");
      }
      PolygonShape poly;
      for (std::size_t k = 0; k < v.size(); k += 2) poly.vertices.push_back({v[k], v[k + 1]});
      regions.push_back({std::move(poly), cls});
    } else {
      throw DataError("manifest line " + std::to_string(line_no) + ": unknown region '" + item + "'");
    }
  }
  return regions;
}

void check_field(const std::string& s, const char* what) {
  if (s.find_first_of("\t\n\r") != std::string::npos) {
    throw DataError(std::string("manifest ") + what + " contains a tab or newline: " + s);
  }
}

}  // namespace

std::string region_digest(const AnnotatedImage& image) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : format_regions(image)) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string format_manifest(const Dataset& dataset) {
  std::string out(kHeader);
  out += '\n';
  out += kTaxonomyTag;
  for (const auto& name : dataset.taxonomy.instrument_names()) {
    out += '\t';
    out += name;
  }
  out += '\n';
  for (const auto& image : dataset.images) {
    check_field(image.image_id, "image id");
    check_field(image.path, "path");
    out += image.image_id + '\t' + image.path + '\t' + dataset.taxonomy.name(image.truth_class) + '\t' +
           std::to_string(image.width) + '\t' + std::to_string(image.height) + '\t' + format_regions(image) + '\t' +
           region_digest(image) + '\n';
  }
  return out;
}

Dataset parse_manifest(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kHeader) throw DataError("not a surgseg manifest (bad header line)");
  if (!std::getline(in, line) || line.rfind(kTaxonomyTag, 0) != 0) {
    throw DataError("manifest line 2: expected taxonomy line");
  }
  auto names = split(line, '\t');
  names.erase(names.begin());
  Dataset dataset{ClassTaxonomy(std::move(names)), {}};
  int line_no = 2;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto f = split(line, '\t');
    if (f.size() != 7) throw DataError("manifest line " + std::to_string(line_no) + ": expected 7 fields");
    AnnotatedImage image;
    image.image_id = f[0];
    image.path = f[1];
    auto cls = dataset.taxonomy.find(f[2]);
    if (!cls) throw DataError("manifest line " + std::to_string(line_no) + ": unknown class '" + f[2] + "'");
    image.truth_class = *cls;
    image.width = static_cast<int>(parse_double(f[3], line_no));
    image.height = static_cast<int>(parse_double(f[4], line_no));
    image.regions = parse_regions(f[5], *cls, line_no);
    if (region_digest(image) != f[6]) {
      throw DataError("manifest line " + std::to_string(line_no) + ": region digest mismatch for " + image.image_id);
    }
    dataset.images.push_back(std::move(image));
  }
  return dataset;
}

void write_manifest(const std::string& path, const Dataset& dataset) {
  write_file_atomic(path, format_manifest(dataset));
}

Dataset read_manifest(const std::string& path) { return parse_manifest(read_text_file(path)); }

}  // namespace surgseg
