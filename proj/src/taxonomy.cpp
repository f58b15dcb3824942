#include "surgseg/taxonomy.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "surgseg/errors.hpp"

namespace surgseg {

std::string normalize_class_name(std::string_view name) {
  auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  std::size_t begin = 0;
  std::size_t end = name.size();
  while (begin < end && is_space(name[begin])) ++begin;
  while (end > begin && is_space(name[end - 1])) --end;
  std::string out;
  out.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) {
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(name[i]))));
  }
  return out;
}

ClassTaxonomy::ClassTaxonomy(std::vector<std::string> instrument_names) : names_(std::move(instrument_names)) {
  if (names_.empty()) throw ConfigError("taxonomy needs at least one instrument class");
  for (std::size_t i = 0; i < names_.size(); ++i) {
    std::string key = normalize_class_name(names_[i]);
    if (key.empty()) throw ConfigError("taxonomy class " + std::to_string(i) + " has an empty name");
    if (key == "not a tool") throw ConfigError("'not a tool' is reserved for the background class");
    if (!index_.emplace(key, static_cast<ClassId>(i)).second) {
      throw ConfigError("duplicate taxonomy class name: " + names_[i]);
    }
  }
}

ClassTaxonomy ClassTaxonomy::neurosurgical() {
  return ClassTaxonomy({
      "Adson Forceps",        "Allis Clamp",         "Army Navy Retractor",  "Bayonet Forceps",
      "Bone Curette",         "Bovie Cautery",       "Clip Applier",         "Cobb Retractor",
      "Debakey Forceps",      "Gerald Forceps",      "Irrigation Bulb",      "Kerrison Rongeur",
      "Leksell Rongeurs",     "Metzenbaum Scissors", "Mosquito Clamp",       "Needle Driver",
      "Neuro Pattie Sponges", "Periosteal Elevator", "Raney Clip Applier",   "Raytec Sponge",
      "Right Angle Forceps",  "Scalpel",             "Sponge Stick",         "Suction",
      "Syringe",              "Tonsil Forceps",      "Weitlaner Retractor",
  });
}

ClassTaxonomy ClassTaxonomy::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open taxonomy file: " + path);
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    std::string trimmed = line;
    trimmed.erase(0, trimmed.find_first_not_of(" \t\r"));
    trimmed.erase(trimmed.find_last_not_of(" \t\r") + 1);
    if (trimmed.empty() || trimmed.front() == '#') continue;
    names.push_back(trimmed);
  }
  return ClassTaxonomy(std::move(names));
}

const std::string& ClassTaxonomy::name(ClassId id) const {
  static const std::string background = "not a tool";
  if (id == background_id()) return background;
  if (!is_instrument(id)) throw ConfigError("class id out of range: " + std::to_string(id));
  return names_[static_cast<std::size_t>(id)];
}

std::optional<ClassId> ClassTaxonomy::find(std::string_view name) const {
  const std::string key = normalize_class_name(name);
  if (auto it = aliases_.find(key); it != aliases_.end()) return it->second;
  if (auto it = index_.find(key); it != index_.end()) return it->second;
  return std::nullopt;
}

void ClassTaxonomy::add_alias(std::string_view alias, std::string_view canonical) {
  auto target = index_.find(normalize_class_name(canonical));
  if (target == index_.end()) {
    throw ConfigError("alias target is not a taxonomy class: " + std::string(canonical));
  }
  aliases_[normalize_class_name(alias)] = target->second;
}

}  // namespace surgseg
