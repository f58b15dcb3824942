#pragma once

#include <string>
#include <vector>

#include "surgseg/annotations.hpp"

namespace surgseg {

struct Dataset {
  ClassTaxonomy taxonomy;
  std::vector<AnnotatedImage> images;
};

/// 16 hex digits; FNV-1a over the canonical region text.
std::string region_digest(const AnnotatedImage& image);

/// Line-oriented manifest (see docs/formats.md):
///   #surgseg-manifest v1
///   #taxonomy<TAB>name0<TAB>name1...
///   id<TAB>path<TAB>class<TAB>width<TAB>height<TAB>regions<TAB>digest
std::string format_manifest(const Dataset& dataset);
Dataset parse_manifest(const std::string& text);

void write_manifest(const std::string& path, const Dataset& dataset);
Dataset read_manifest(const std::string& path);

}  // namespace surgseg
