#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "surgseg/errors.hpp"
#include "surgseg/experiment.hpp"

namespace surgseg {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over the combined value.
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::vector<FoldSplit> make_folds(std::span<const AnnotatedImage> images, int k, std::uint64_t seed, FoldMode mode) {
  const std::size_t n = images.size();
  if (k < 2) throw ConfigError("need at least 2 folds");
  if (n < static_cast<std::size_t>(k)) {
    throw ConfigError("cannot split " + std::to_string(n) + " images into " + std::to_string(k) + " folds");
  }
  std::set<std::string> ids;
  for (const auto& img : images) {
    if (!ids.insert(img.image_id).second) throw ConfigError("duplicate image id " + img.image_id);
  }

  std::mt19937_64 rng(seed);
  std::vector<int> fold_of(n, 0);
  if (mode == FoldMode::kStratified) {
    std::map<ClassId, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < n; ++i) by_class[images[i].truth_class].push_back(i);
    std::size_t position = 0;
    for (auto& [cls, members] : by_class) {
      std::shuffle(members.begin(), members.end(), rng);
      for (std::size_t idx : members) fold_of[idx] = static_cast<int>(position++ % static_cast<std::size_t>(k));
    }
  } else {
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    const std::size_t base = n / static_cast<std::size_t>(k);
    const std::size_t extra = n % static_cast<std::size_t>(k);
    std::size_t cursor = 0;
    for (int f = 0; f < k; ++f) {
      const std::size_t size = base + (static_cast<std::size_t>(f) < extra ? 1 : 0);
      for (std::size_t j = 0; j < size; ++j) fold_of[perm[cursor++]] = f;
    }
  }

  std::vector<FoldSplit> folds(static_cast<std::size_t>(k));
  for (int f = 0; f < k; ++f) folds[static_cast<std::size_t>(f)].fold_index = f;
  for (std::size_t i = 0; i < n; ++i) {
    for (int f = 0; f < k; ++f) {
      FoldSplit& split = folds[static_cast<std::size_t>(f)];
      if (fold_of[i] == f) {
        split.test_indices.push_back(i);
        split.test_ids.push_back(images[i].image_id);
      } else {
        split.train_indices.push_back(i);
        split.train_ids.push_back(images[i].image_id);
      }
    }
  }
  return folds;
}

}  // namespace surgseg
