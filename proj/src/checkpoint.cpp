#include "aquaseg/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "aquaseg/errors.hpp"

namespace aquaseg {

namespace {

constexpr char kMagic[4] = {'A', 'Q', 'C', 'K'};
constexpr const char* kMetaPrefix = "meta/";

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(FormatError::Kind::truncated, std::string("AQCK: truncated while reading ") + what);
    }
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::vector<int> split_ints(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw FormatError(FormatError::Kind::malformed, "AQCK: bad integer list '" + s + "'");
    }
  }
  return out;
}

std::string config_key(const std::string& group, const char* field) {
  return (group.empty() ? std::string("unet") : group) + "." + field;
}

std::string tensor_name(const std::string& group, const std::string& name) {
  return group.empty() ? name : group + "/" + name;
}

}  // namespace

void Checkpoint::set_meta(const std::string& key, const std::string& value) {
  if (key.find('=') != std::string::npos) throw ConfigError("checkpoint metadata key may not contain '=': " + key);
  for (auto& kv : metadata) {
    if (kv.first == key) {
      kv.second = value;
      return;
    }
  }
  metadata.emplace_back(key, value);
}

std::optional<std::string> Checkpoint::find_meta(const std::string& key) const {
  for (const auto& kv : metadata) {
    if (kv.first == key) return kv.second;
  }
  return std::nullopt;
}

std::string Checkpoint::meta(const std::string& key) const {
  auto v = find_meta(key);
  if (!v) throw FormatError(FormatError::Kind::malformed, "AQCK: missing metadata '" + key + "'");
  return *v;
}

const CheckpointTensor* Checkpoint::find_tensor(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, Checkpoint::kVersion);
  put_u32(out, static_cast<std::uint32_t>(ckpt.metadata.size() + ckpt.tensors.size()));
  auto put_name = [&](const std::string& name) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
  };
  for (const auto& [key, value] : ckpt.metadata) {
    put_name(kMetaPrefix + key + "=" + value);
    put_u32(out, 1);
    put_u32(out, 0);
  }
  for (const auto& t : ckpt.tensors) {
    std::size_t count = 1;
    for (auto d : t.dims) count *= d;
    if (count != t.values.size()) {
      throw ShapeError("checkpoint tensor '" + t.name + "' dims do not match its " + std::to_string(t.values.size()) +
                       " values");
    }
    put_name(t.name);
    put_u32(out, static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) put_u32(out, d);
    for (float v : t.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError(FormatError::Kind::bad_magic, "AQCK: bad magic (not a checkpoint file)");
  }
  r.take(4, "magic");
  const auto version = r.u32("version");
  if (version != Checkpoint::kVersion) {
    throw FormatError(FormatError::Kind::bad_version, "AQCK: unsupported version " + std::to_string(version));
  }
  const auto count = r.u32("tensor count");
  Checkpoint ckpt;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.u32("name length");
    auto raw = r.take(name_len, "tensor name");
    std::string name(raw.begin(), raw.end());
    const auto ndim = r.u32("ndim");
    if (ndim > 8) throw FormatError(FormatError::Kind::malformed, "AQCK: tensor '" + name + "' has ndim " + std::to_string(ndim));
    std::vector<std::uint32_t> dims(ndim);
    std::uint64_t numel = 1;
    for (auto& d : dims) {
      d = r.u32("dims");
      numel *= d;
    }
    if (numel * 4 > r.remaining()) {
      throw FormatError(FormatError::Kind::truncated, "AQCK: truncated payload for tensor '" + name + "'");
    }
    if (name.rfind(kMetaPrefix, 0) == 0 && numel == 0) {
      const auto body = name.substr(std::strlen(kMetaPrefix));
      const auto eq = body.find('=');
      if (eq == std::string::npos) throw FormatError(FormatError::Kind::malformed, "AQCK: metadata entry without '='");
      ckpt.metadata.emplace_back(body.substr(0, eq), body.substr(eq + 1));
      continue;
    }
    CheckpointTensor t{std::move(name), std::move(dims), std::vector<float>(numel)};
    auto payload = r.take(numel * 4, "payload");
    for (std::size_t k = 0; k < numel; ++k) {
      std::uint32_t u = 0;
      for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(payload[4 * k + b]) << (8 * b);
      t.values[k] = std::bit_cast<float>(u);
    }
    ckpt.tensors.push_back(std::move(t));
  }
  if (r.remaining() != 0) {
    throw FormatError(FormatError::Kind::malformed, "AQCK: " + std::to_string(r.remaining()) + " trailing bytes");
  }
  return ckpt;
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("failed writing '" + path.string() + "'");
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

void append_unet(Checkpoint& ckpt, const UNetModel<float>& model, const std::string& group) {
  const auto& c = model.config();
  ckpt.set_meta(config_key(group, "preset"), c.preset);
  ckpt.set_meta(config_key(group, "in_channels"), std::to_string(c.in_channels));
  ckpt.set_meta(config_key(group, "depth"), std::to_string(c.depth));
  ckpt.set_meta(config_key(group, "convs"), join_ints(c.encoder_block_convs));
  ckpt.set_meta(config_key(group, "channels"), join_ints(c.encoder_channels));
  for (const auto& p : model.parameters()) {
    const Shape4 s = p.tensor.shape();
    ckpt.tensors.push_back({tensor_name(group, p.name),
                            {static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c),
                             static_cast<std::uint32_t>(s.h), static_cast<std::uint32_t>(s.w)},
                            std::vector<float>(p.tensor.data().begin(), p.tensor.data().end())});
  }
}

UNetConfig extract_unet_config(const Checkpoint& ckpt, const std::string& group) {
  UNetConfig c;
  c.preset = ckpt.meta(config_key(group, "preset"));
  try {
    c.in_channels = std::stoi(ckpt.meta(config_key(group, "in_channels")));
    c.depth = std::stoi(ckpt.meta(config_key(group, "depth")));
  } catch (const std::logic_error&) {
    throw FormatError(FormatError::Kind::malformed, "AQCK: non-numeric config echo");
  }
  c.encoder_block_convs = split_ints(ckpt.meta(config_key(group, "convs")));
  c.encoder_channels = split_ints(ckpt.meta(config_key(group, "channels")));
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw FormatError(FormatError::Kind::malformed, std::string("AQCK: invalid embedded config: ") + e.what());
  }
  return c;
}

UNetModel<float> extract_unet(const Checkpoint& ckpt, const std::string& group) {
  const UNetConfig config = extract_unet_config(ckpt, group);
  std::vector<NamedParameter<float>> params;
  for (const auto& spec : unet_parameter_layout(config)) {
    const auto full = tensor_name(group, spec.name);
    const CheckpointTensor* t = ckpt.find_tensor(full);
    if (!t) throw FormatError(FormatError::Kind::shape_mismatch, "AQCK: missing tensor '" + full + "'");
    const std::vector<std::uint32_t> want{static_cast<std::uint32_t>(spec.shape.n), static_cast<std::uint32_t>(spec.shape.c),
                                          static_cast<std::uint32_t>(spec.shape.h), static_cast<std::uint32_t>(spec.shape.w)};
    if (t->dims != want) {
      throw FormatError(FormatError::Kind::shape_mismatch,
                        "AQCK: tensor '" + full + "' does not match config shape " + spec.shape.str());
    }
    params.push_back({spec.name, Tensor<float>::from_vector(spec.shape, t->values, true)});
  }
  return UNetModel<float>(config, std::move(params));
}

void save_checkpoint(const UNetModel<float>& model, const std::filesystem::path& path,
                     const std::vector<std::pair<std::string, std::string>>& metadata) {
  Checkpoint ckpt;
  for (const auto& [k, v] : metadata) ckpt.set_meta(k, v);
  append_unet(ckpt, model);
  write_checkpoint(ckpt, path);
}

UNetModel<float> load_checkpoint(const std::filesystem::path& path) { return extract_unet(read_checkpoint(path)); }

}  // namespace aquaseg
