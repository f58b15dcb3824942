#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace surgseg {

using ClassId = int;

/// Ordered instrument classes plus one reserved background ("not a tool")
/// class. Instrument classes occupy indices [0, num_instruments()) in the
/// order given; the background class is always the last index.
class ClassTaxonomy {
 public:
  explicit ClassTaxonomy(std::vector<std::string> instrument_names);

  /// The 27-instrument neurosurgical set, alphabetical.
  static ClassTaxonomy neurosurgical();

  /// One name per line; blank lines and '#' comments ignored.
  static ClassTaxonomy from_file(const std::string& path);

  int num_instruments() const { return static_cast<int>(names_.size()); }
  int num_channels() const { return num_instruments() + 1; }
  ClassId background_id() const { return num_instruments(); }
  bool is_instrument(ClassId id) const { return id >= 0 && id < num_instruments(); }
  bool is_valid(ClassId id) const { return id >= 0 && id < num_channels(); }

  /// Name for any valid id; the background reads "not a tool".
  const std::string& name(ClassId id) const;
  const std::vector<std::string>& instrument_names() const { return names_; }

  /// Case-insensitive, whitespace-trimmed lookup. Aliases are consulted
  /// first (keys normalized the same way).
  std::optional<ClassId> find(std::string_view name) const;

  void add_alias(std::string_view alias, std::string_view canonical);

 private:
  std::vector<std::string> names_;
  std::map<std::string, ClassId> index_;  // normalized name -> id
  std::map<std::string, ClassId> aliases_;
};

/// Lowercase and trim; used for all class-name comparisons.
std::string normalize_class_name(std::string_view name);

}  // namespace surgseg
