#include "surgseg/checkpoint.hpp"

#include <charconv>
#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "surgseg/errors.hpp"
#include "surgseg/fileutil.hpp"

namespace surgseg {
namespace {

constexpr char kMagic[8] = {'S', 'S', 'E', 'G', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }
  void raw(const char* p, std::size_t n) { bytes_.insert(bytes_.end(), p, p + n); }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw DataError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  std::size_t pos() const { return pos_; }
  std::span<const std::uint8_t> bytes() const { return bytes_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::uint32_t crc(std::span<const std::uint8_t> b) {
  return static_cast<std::uint32_t>(::crc32(0L, b.data(), static_cast<uInt>(b.size())));
}

std::string shape_text(const std::vector<std::uint32_t>& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? ", " : "") + std::to_string(shape[i]);
  return s + ")";
}

std::vector<std::uint32_t> to_u32(const std::vector<int>& shape) { return {shape.begin(), shape.end()}; }

void copy_into(const NamedTensor& src, const ParamTensor& dst, std::span<float> storage) {
  if (src.shape != to_u32(dst.shape)) {
    throw DataError("checkpoint tensor " + dst.name + " has shape " + shape_text(src.shape) + ", model expects " +
                    shape_text(to_u32(dst.shape)));
  }
  std::copy(src.values.begin(), src.values.end(), storage.begin() + static_cast<std::ptrdiff_t>(dst.offset));
}

}  // namespace

const NamedTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

const std::string* Checkpoint::meta(const std::string& key) const {
  for (const auto& [k, v] : metadata) {
    if (k == key) return &v;
  }
  return nullptr;
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.u32(Checkpoint::kVersion);
  w.u32(static_cast<std::uint32_t>(ckpt.metadata.size()));
  for (const auto& [k, v] : ckpt.metadata) {
    w.str(k);
    w.str(v);
  }
  w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    std::size_t count = 1;
    for (auto d : t.shape) count *= d;
    if (count != t.values.size()) throw ShapeError("checkpoint tensor " + t.name + ": shape/value count mismatch");
    w.str(t.name);
    w.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) w.u32(d);
    for (float v : t.values) w.f32(v);
  }
  w.u32(crc(w.bytes()));
  return std::move(w.bytes());
}

Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < sizeof kMagic + 8 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw DataError("not a surgseg checkpoint (bad magic)");
  }
  const auto body = bytes.first(bytes.size() - 4);
  Reader tail(bytes.subspan(bytes.size() - 4));
  if (crc(body) != tail.u32()) throw DataError("checkpoint CRC mismatch (file corrupted)");
  Reader r(body.subspan(sizeof kMagic));
  const std::uint32_t version = r.u32();
  if (version != Checkpoint::kVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  const std::uint32_t n_meta = r.u32();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = r.str();
    ckpt.metadata.emplace_back(std::move(k), r.str());
  }
  const std::uint32_t n_tensors = r.u32();
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    NamedTensor t;
    t.name = r.str();
    const std::uint32_t ndim = r.u32();
    std::size_t count = 1;
    for (std::uint32_t k = 0; k < ndim; ++k) {
      t.shape.push_back(r.u32());
      count *= t.shape.back();
    }
    r.need(count * 4);
    t.values.resize(count);
    for (auto& v : t.values) v = r.f32();
    ckpt.tensors.push_back(std::move(t));
  }
  if (r.pos() != body.size() - sizeof kMagic) throw DataError("checkpoint has trailing bytes");
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  write_file_atomic(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return parse_checkpoint(bytes);
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

Checkpoint make_checkpoint(const UNet& model) {
  const UNetConfig& c = model.config();
  Checkpoint ckpt;
  ckpt.metadata = {{"height", std::to_string(c.height)},
                   {"width", std::to_string(c.width)},
                   {"depth", std::to_string(c.depth)},
                   {"base_channels", std::to_string(c.base_channels)},
                   {"num_classes", std::to_string(c.num_classes)},
                   {"batch_norm", c.batch_norm ? "1" : "0"},
                   {"init_seed", std::to_string(c.init_seed)}};
  auto add = [&](const std::vector<ParamTensor>& list, std::span<const float> storage) {
    for (const ParamTensor& p : list) {
      ckpt.tensors.push_back({p.name, to_u32(p.shape),
                              std::vector<float>(storage.begin() + static_cast<std::ptrdiff_t>(p.offset),
                                                 storage.begin() + static_cast<std::ptrdiff_t>(p.offset + p.size))});
    }
  };
  add(model.parameter_tensors(), model.parameters());
  add(model.buffer_tensors(), model.buffers());
  return ckpt;
}

void set_taxonomy_metadata(Checkpoint& ckpt, const ClassTaxonomy& taxonomy) {
  std::string joined;
  for (const auto& n : taxonomy.instrument_names()) {
    if (!joined.empty()) joined += '\t';
    joined += n;
  }
  std::erase_if(ckpt.metadata, [](const auto& kv) { return kv.first == "taxonomy"; });
  ckpt.metadata.emplace_back("taxonomy", joined);
}

std::optional<ClassTaxonomy> taxonomy_from_checkpoint(const Checkpoint& ckpt) {
  const std::string* joined = ckpt.meta("taxonomy");
  if (!joined) return std::nullopt;
  std::vector<std::string> names;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = joined->find('\t', start);
    names.push_back(joined->substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return ClassTaxonomy(std::move(names));
}

UNetConfig config_from_checkpoint(const Checkpoint& ckpt) {
  auto get = [&]<typename T>(const char* key, T& out) {
    const std::string* v = ckpt.meta(key);
    if (!v) throw DataError(std::string("checkpoint metadata lacks '") + key + "'");
    const auto [end, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc() || end != v->data() + v->size()) {
      throw DataError(std::string("checkpoint metadata '") + key + "' is not an integer");
    }
  };
  UNetConfig c;
  get("height", c.height);
  get("width", c.width);
  get("depth", c.depth);
  get("base_channels", c.base_channels);
  get("num_classes", c.num_classes);
  int batch_norm = 0;
  get("batch_norm", batch_norm);
  c.batch_norm = batch_norm != 0;
  get("init_seed", c.init_seed);
  return c;
}

void restore_checkpoint(UNet& model, const Checkpoint& ckpt) {
  auto restore = [&](const std::vector<ParamTensor>& list, std::span<float> storage) {
    for (const ParamTensor& p : list) {
      const NamedTensor* t = ckpt.find(p.name);
      if (!t) throw DataError("checkpoint lacks tensor " + p.name);
      copy_into(*t, p, storage);
    }
  };
  // Validate everything before mutating so a failed restore leaves the
  // model unchanged.
  UNet staged = model;
  restore(staged.parameter_tensors(), staged.parameters());
  restore(staged.buffer_tensors(), staged.buffers());
  model = std::move(staged);
}

UNet model_from_checkpoint(const Checkpoint& ckpt) {
  UNetConfig config = config_from_checkpoint(ckpt);
  try {
    config.validate();
  } catch (const ConfigError& e) {
    throw DataError(std::string("checkpoint config invalid: ") + e.what());
  }
  UNet model(config);
  restore_checkpoint(model, ckpt);
  return model;
}

void load_encoder_weights(UNet& model, const Checkpoint& source) {
  UNet staged = model;
  auto load = [&](const std::vector<ParamTensor>& list, std::span<float> storage) {
    for (const ParamTensor& p : list) {
      if (p.part != LayerPart::kEncoder) continue;
      const NamedTensor* t = source.find(p.name);
      if (!t) throw DataError("encoder checkpoint lacks tensor " + p.name);
      copy_into(*t, p, storage);
    }
  };
  load(staged.parameter_tensors(), staged.parameters());
  load(staged.buffer_tensors(), staged.buffers());
  model = std::move(staged);
}

}  // namespace surgseg
