#include "surgseg/evaluator.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "surgseg/errors.hpp"
#include "surgseg/preprocess.hpp"
#include "surgseg/raster.hpp"

namespace surgseg {

Threshold::Threshold(double tau) : tau_(tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("threshold tau must lie in (0, 1), got " + std::to_string(tau));
}

void PixelSet::insert(int y, int x) {
  auto& m = member_[index(y, x)];
  if (!m) {
    m = 1;
    ++count_;
  }
}

PixelSet positive_pixels(const ProbabilityMap& map, ClassId class_id, Threshold tau) {
  if (class_id < 0 || class_id >= map.channels) throw ShapeError("positive_pixels: class id out of range");
  PixelSet set(map.height, map.width);
  const auto plane = map.channel(class_id);
  const double t = tau.value();
  for (int y = 0; y < map.height; ++y) {
    for (int x = 0; x < map.width; ++x) {
      if (static_cast<double>(plane[static_cast<std::size_t>(y) * map.width + x]) > t) set.insert(y, x);
    }
  }
  return set;
}

PixelSet mask_pixels(const LabelMask& mask, ClassId class_id) {
  PixelSet set(mask.height, mask.width);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (mask.at(y, x) == class_id) set.insert(y, x);
    }
  }
  return set;
}

Classification classify_image(const ProbabilityMap& map, const ClassTaxonomy& taxonomy, Threshold tau) {
  if (map.channels != taxonomy.num_channels()) throw ShapeError("classify_image: channel count differs from taxonomy");
  const double t = tau.value();
  const std::size_t plane = map.plane_size();
  Classification best;
  std::size_t best_area = 0;
  for (ClassId c = 0; c < taxonomy.num_instruments(); ++c) {
    const auto ch = map.channel(c);
    std::size_t area = 0;
    for (std::size_t i = 0; i < plane; ++i) area += static_cast<double>(ch[i]) > t ? 1 : 0;
    if (area > best_area) {
      best_area = area;
      best.predicted = c;
    }
  }
  if (best_area > 0) return best;
  best.fallback = true;
  double best_mass = -1.0;
  for (ClassId c = 0; c < taxonomy.num_instruments(); ++c) {
    double mass = 0.0;
    for (float v : map.channel(c)) mass += v;
    if (mass > best_mass) {
      best_mass = mass;
      best.predicted = c;
    }
  }
  return best;
}

double iou(const PixelSet& a, const PixelSet& b) {
  if (a.height() != b.height() || a.width() != b.width()) throw ShapeError("iou: pixel sets on different grids");
  const auto ma = a.membership();
  const auto mb = b.membership();
  std::size_t inter = 0;
  std::size_t uni = 0;
  for (std::size_t i = 0; i < ma.size(); ++i) {
    inter += (ma[i] & mb[i]);
    uni += (ma[i] | mb[i]);
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

EvalRecord evaluate_prediction(const std::string& image_id, const ProbabilityMap& map, const LabelMask& truth_mask,
                               ClassId truth_class, const ClassTaxonomy& taxonomy, Threshold tau) {
  if (map.height != truth_mask.height || map.width != truth_mask.width) {
    throw ShapeError("evaluate: prediction " + std::to_string(map.height) + "x" + std::to_string(map.width) +
                     " vs mask " + std::to_string(truth_mask.height) + "x" + std::to_string(truth_mask.width));
  }
  const Classification cls = classify_image(map, taxonomy, tau);
  EvalRecord rec;
  rec.image_id = image_id;
  rec.truth_class = truth_class;
  rec.predicted_class = cls.predicted;
  rec.correct = cls.predicted == truth_class;
  rec.fallback = cls.fallback;
  rec.iou = iou(positive_pixels(map, truth_class, tau), mask_pixels(truth_mask, truth_class));
  return rec;
}

EvalRecord evaluate_image(const UNet& model, const AnnotatedImage& image, const ClassTaxonomy& taxonomy,
                          Threshold tau) {
  const ImageSize dims{model.config().height, model.config().width};
  const Image input = load_and_preprocess(image.path, dims);
  const LabelMask mask = rasterize_mask(image, dims, taxonomy.background_id());
  const auto maps = predict(model, std::span<const Image>(&input, 1));
  return evaluate_prediction(image.image_id, maps.front(), mask, image.truth_class, taxonomy, tau);
}

std::string format_records(const std::vector<EvalRecord>& records, const ClassTaxonomy& taxonomy, Threshold tau) {
  std::string out = "image_id\tfold\ttruth\tpredicted\tcorrect\tiou\ttau\tfallback\n";
  char num[64];
  std::snprintf(num, sizeof num, "%.4f", tau.value());
  const std::string tau_text = num;
  for (const auto& r : records) {
    std::snprintf(num, sizeof num, "%.10f", r.iou);
    out += r.image_id + '\t' + std::to_string(r.fold_index) + '\t' + taxonomy.name(r.truth_class) + '\t' +
           taxonomy.name(r.predicted_class) + '\t' + (r.correct ? "1" : "0") + '\t' + num + '\t' + tau_text + '\t' +
           (r.fallback ? "1" : "0") + '\n';
  }
  return out;
}

std::vector<EvalRecord> parse_records(const std::string& text, const ClassTaxonomy& taxonomy, double* tau) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("image_id\t", 0) != 0) throw DataError("record file lacks header line");
  std::vector<EvalRecord> records;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string field;
    while (std::getline(ls, field, '\t')) f.push_back(field);
    if (f.size() != 8) throw DataError("record line " + std::to_string(line_no) + ": expected 8 fields");
    auto lookup = [&](const std::string& name) {
      if (normalize_class_name(name) == normalize_class_name(taxonomy.name(taxonomy.background_id()))) {
        return taxonomy.background_id();
      }
      auto id = taxonomy.find(name);
      if (!id) throw DataError("record line " + std::to_string(line_no) + ": unknown class " + name);
      return *id;
    };
    EvalRecord r;
    try {
      r.image_id = f[0];
      r.fold_index = std::stoi(f[1]);
      r.truth_class = lookup(f[2]);
      r.predicted_class = lookup(f[3]);
      r.correct = f[4] == "1";
      r.iou = std::stod(f[5]);
      if (tau) *tau = std::stod(f[6]);
      r.fallback = f[7] == "1";
    } catch (const std::invalid_argument&) {
      throw DataError("record line " + std::to_string(line_no) + ": malformed number");
    }
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace surgseg
