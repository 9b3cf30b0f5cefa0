#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <variant>
#include <vector>

namespace aquaseg {

enum class DType : std::uint32_t { u8 = 0, f32 = 1 };

/// Multi-band raster, band-sequential and row-major within a band.
struct RasterImage {
  int width = 0;
  int height = 0;
  int bands = 0;
  std::variant<std::vector<std::uint8_t>, std::vector<float>> pixels;

  static RasterImage zeros(int width, int height, int bands, DType dtype);

  DType dtype() const { return pixels.index() == 0 ? DType::u8 : DType::f32; }
  std::size_t plane() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
  std::size_t size() const { return plane() * static_cast<std::size_t>(bands); }

  float value(int band, int y, int x) const;
  void set(int band, int y, int x, float v);

  /// Throws when pixel count or band count violate the invariants.
  void validate() const;
};

/// Single-band binary mask (1 = water).
struct MaskImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> values;

  std::uint8_t at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
  void validate() const;

  RasterImage to_raster() const;
  static MaskImage from_raster(const RasterImage& raster);
};

// AQR layout: "AQR1" | u32 width | u32 height | u32 bands | u32 dtype (0 = u8, 1 = f32)
// followed by the band-sequential payload; everything little-endian.
std::vector<std::uint8_t> encode_raster(const RasterImage& image);
RasterImage decode_raster(std::span<const std::uint8_t> bytes);

void write_raster(const RasterImage& image, const std::filesystem::path& path);
RasterImage read_raster(const std::filesystem::path& path);

/// Binary P5 PGM of band 0. Masks are scaled 0/1 -> 0/255 when `scale_binary` is set.
void write_pgm(const RasterImage& image, const std::filesystem::path& path, bool scale_binary = true);

struct Patch {
  int x = 0;  // column offset in the source
  int y = 0;  // row offset in the source
  RasterImage image;
  std::optional<MaskImage> mask;
};

/// Windows at (i * stride, j * stride) lying fully inside the image, in row-major
/// order. The mask, when given, is cropped identically.
std::vector<Patch> patchify(const RasterImage& image, const std::optional<MaskImage>& mask, int size, int stride);

/// Number of windows patchify() produces for the given geometry.
std::size_t patch_count(int width, int height, int size, int stride);

RasterImage crop(const RasterImage& image, int x, int y, int width, int height);

}  // namespace aquaseg
