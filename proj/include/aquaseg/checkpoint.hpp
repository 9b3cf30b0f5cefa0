#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "aquaseg/nn.hpp"

namespace aquaseg {

/// AQCK file layout, all integers little-endian u32:
///   "AQCK" | version | tensor count | per tensor:
///   name length | UTF-8 name | ndim | dims... | float32 payload (LE)
///
/// Metadata (config echo, epoch, seed) travels as zero-element tensors named
/// "meta/<key>=<value>" with ndim 1 and dims {0}, so the layout carries no
/// extra sections.
struct CheckpointTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;
};

struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::vector<CheckpointTensor> tensors;
  std::vector<std::pair<std::string, std::string>> metadata;

  void set_meta(const std::string& key, const std::string& value);
  std::optional<std::string> find_meta(const std::string& key) const;
  /// Throws FormatError(malformed) when the key is absent.
  std::string meta(const std::string& key) const;
  const CheckpointTensor* find_tensor(const std::string& name) const;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Adds the model's parameters (prefixed "<group>/" when group is non-empty)
/// and its config echo (keys "<group or unet>.preset", ...).
void append_unet(Checkpoint& ckpt, const UNetModel<float>& model, const std::string& group = "");
/// Rebuilds the config from metadata and validates every tensor shape against it.
UNetModel<float> extract_unet(const Checkpoint& ckpt, const std::string& group = "");
UNetConfig extract_unet_config(const Checkpoint& ckpt, const std::string& group = "");

void save_checkpoint(const UNetModel<float>& model, const std::filesystem::path& path,
                     const std::vector<std::pair<std::string, std::string>>& metadata = {});
UNetModel<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace aquaseg
