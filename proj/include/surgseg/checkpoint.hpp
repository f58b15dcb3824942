#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "surgseg/unet.hpp"

namespace surgseg {

/// Versioned container of named float32 tensors plus string metadata.
/// Byte layout (all integers little-endian u32, floats little-endian f32):
///
///   "SSEGCKPT" | version | n_meta | (klen key vlen value)* |
///   n_tensors | (nlen name ndim dims[ndim] data[prod(dims)])* | crc32
///
/// The trailing CRC-32 covers every preceding byte.
struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> shape;
  std::vector<float> values;
};

struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;
  std::vector<std::pair<std::string, std::string>> metadata;
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(const std::string& name) const;
  const std::string* meta(const std::string& key) const;
};

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
/// Throws DataError on bad magic, unsupported version, truncation or CRC
/// mismatch.
Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

/// Parameters and batch-norm buffers, with the model config as metadata.
Checkpoint make_checkpoint(const UNet& model);
/// Stores the instrument names under the "taxonomy" key.
void set_taxonomy_metadata(Checkpoint& ckpt, const ClassTaxonomy& taxonomy);
/// Empty when the checkpoint carries no taxonomy.
std::optional<ClassTaxonomy> taxonomy_from_checkpoint(const Checkpoint& ckpt);

UNetConfig config_from_checkpoint(const Checkpoint& ckpt);
/// Replaces every parameter and buffer; throws DataError naming the first
/// missing or mismatching tensor.
void restore_checkpoint(UNet& model, const Checkpoint& ckpt);
/// Builds a model from the checkpoint's config and restores it.
UNet model_from_checkpoint(const Checkpoint& ckpt);

/// Replaces encoder (contracting path and bottleneck) tensors only; the
/// decoder is untouched. Throws DataError naming the first encoder layer
/// whose tensor is missing or has a different shape.
void load_encoder_weights(UNet& model, const Checkpoint& source);

}  // namespace surgseg
