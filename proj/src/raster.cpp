#include "aquaseg/raster.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "aquaseg/errors.hpp"

namespace aquaseg {

namespace {

constexpr char kMagic[4] = {'A', 'Q', 'R', '1'};
constexpr std::size_t kHeaderBytes = 20;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

std::size_t pixel_count(const RasterImage& img) {
  return std::visit([](const auto& v) { return v.size(); }, img.pixels);
}

}  // namespace

RasterImage RasterImage::zeros(int width, int height, int bands, DType dtype) {
  RasterImage img;
  img.width = width;
  img.height = height;
  img.bands = bands;
  const std::size_t n = img.size();
  if (dtype == DType::u8) {
    img.pixels = std::vector<std::uint8_t>(n, 0);
  } else {
    img.pixels = std::vector<float>(n, 0.0f);
  }
  return img;
}

float RasterImage::value(int band, int y, int x) const {
  const std::size_t i = static_cast<std::size_t>(band) * plane() + static_cast<std::size_t>(y) * width + x;
  if (const auto* u = std::get_if<std::vector<std::uint8_t>>(&pixels)) return (*u)[i];
  return std::get<std::vector<float>>(pixels)[i];
}

void RasterImage::set(int band, int y, int x, float v) {
  const std::size_t i = static_cast<std::size_t>(band) * plane() + static_cast<std::size_t>(y) * width + x;
  if (auto* u = std::get_if<std::vector<std::uint8_t>>(&pixels)) {
    (*u)[i] = static_cast<std::uint8_t>(v);
  } else {
    std::get<std::vector<float>>(pixels)[i] = v;
  }
}

void RasterImage::validate() const {
  if (width <= 0 || height <= 0) throw ShapeError("raster dimensions must be positive");
  if (bands != 1 && bands != 4) throw ShapeError("raster must have 1 or 4 bands, got " + std::to_string(bands));
  if (pixel_count(*this) != size()) {
    throw ShapeError("raster pixel buffer holds " + std::to_string(pixel_count(*this)) + " values, expected " +
                     std::to_string(size()));
  }
}

void MaskImage::validate() const {
  if (values.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
    throw ShapeError("mask buffer size does not match " + std::to_string(width) + "x" + std::to_string(height));
  }
  for (auto v : values) {
    if (v > 1) throw ContractError("mask values must be 0 or 1, found " + std::to_string(v));
  }
}

RasterImage MaskImage::to_raster() const {
  RasterImage r;
  r.width = width;
  r.height = height;
  r.bands = 1;
  r.pixels = values;
  return r;
}

MaskImage MaskImage::from_raster(const RasterImage& raster) {
  if (raster.bands != 1) throw ShapeError("mask raster must have exactly 1 band, got " + std::to_string(raster.bands));
  MaskImage m;
  m.width = raster.width;
  m.height = raster.height;
  m.values.resize(raster.plane());
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    const float v = raster.value(0, static_cast<int>(i / raster.width), static_cast<int>(i % raster.width));
    if (v != 0.0f && v != 1.0f) throw ContractError("mask raster contains non-binary value " + std::to_string(v));
    m.values[i] = static_cast<std::uint8_t>(v);
  }
  return m;
}

std::vector<std::uint8_t> encode_raster(const RasterImage& image) {
  image.validate();
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, static_cast<std::uint32_t>(image.width));
  put_u32(out, static_cast<std::uint32_t>(image.height));
  put_u32(out, static_cast<std::uint32_t>(image.bands));
  put_u32(out, static_cast<std::uint32_t>(image.dtype()));
  if (const auto* u = std::get_if<std::vector<std::uint8_t>>(&image.pixels)) {
    out.insert(out.end(), u->begin(), u->end());
  } else {
    for (float v : std::get<std::vector<float>>(image.pixels)) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

RasterImage decode_raster(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError(FormatError::Kind::bad_magic, "AQR: bad magic (not an AQR1 raster)");
  }
  if (bytes.size() < kHeaderBytes) throw FormatError(FormatError::Kind::truncated, "AQR: truncated header");
  RasterImage img;
  img.width = static_cast<int>(get_u32(bytes.data() + 4));
  img.height = static_cast<int>(get_u32(bytes.data() + 8));
  img.bands = static_cast<int>(get_u32(bytes.data() + 12));
  const auto code = get_u32(bytes.data() + 16);
  if (code > 1) throw FormatError(FormatError::Kind::unsupported_dtype, "AQR: unsupported dtype code " + std::to_string(code));
  if (img.width <= 0 || img.height <= 0 || (img.bands != 1 && img.bands != 4)) {
    throw FormatError(FormatError::Kind::shape_mismatch, "AQR: invalid dimensions " + std::to_string(img.width) + "x" +
                                                             std::to_string(img.height) + "x" + std::to_string(img.bands));
  }
  const std::size_t elem = code == 0 ? 1 : 4;
  const std::size_t expected = img.size() * elem;
  const std::size_t payload = bytes.size() - kHeaderBytes;
  if (payload < expected) {
    throw FormatError(FormatError::Kind::truncated, "AQR: payload has " + std::to_string(payload) + " bytes, header implies " +
                                                        std::to_string(expected));
  }
  if (payload > expected) {
    throw FormatError(FormatError::Kind::shape_mismatch, "AQR: payload has " + std::to_string(payload) +
                                                             " bytes, header implies " + std::to_string(expected));
  }
  const std::uint8_t* p = bytes.data() + kHeaderBytes;
  if (code == 0) {
    img.pixels = std::vector<std::uint8_t>(p, p + expected);
  } else {
    std::vector<float> v(img.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::bit_cast<float>(get_u32(p + 4 * i));
    img.pixels = std::move(v);
  }
  return img;
}

void write_raster(const RasterImage& image, const std::filesystem::path& path) {
  const auto bytes = encode_raster(image);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("failed writing '" + path.string() + "'");
}

RasterImage read_raster(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open raster '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_raster(bytes);
}

void write_pgm(const RasterImage& image, const std::filesystem::path& path, bool scale_binary) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  std::vector<char> row(static_cast<std::size_t>(image.width));
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      float v = image.value(0, y, x);
      if (scale_binary) v *= 255.0f;
      row[static_cast<std::size_t>(x)] = static_cast<char>(static_cast<std::uint8_t>(std::clamp(v, 0.0f, 255.0f)));
    }
    f.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
  if (!f) throw IoError("failed writing '" + path.string() + "'");
}

RasterImage crop(const RasterImage& image, int x, int y, int width, int height) {
  if (x < 0 || y < 0 || x + width > image.width || y + height > image.height) {
    throw ShapeError("crop window exceeds raster bounds");
  }
  RasterImage out = RasterImage::zeros(width, height, image.bands, image.dtype());
  std::visit(
      [&](auto& dst) {
        const auto& src = std::get<std::remove_reference_t<decltype(dst)>>(image.pixels);
        for (int b = 0; b < image.bands; ++b) {
          for (int r = 0; r < height; ++r) {
            const auto* s = src.data() + static_cast<std::size_t>(b) * image.plane() +
                            static_cast<std::size_t>(y + r) * image.width + x;
            auto* d = dst.data() + static_cast<std::size_t>(b) * out.plane() + static_cast<std::size_t>(r) * width;
            std::copy_n(s, width, d);
          }
        }
      },
      out.pixels);
  return out;
}

std::size_t patch_count(int width, int height, int size, int stride) {
  if (size < 1 || stride < 1 || size > width || size > height) return 0;
  return static_cast<std::size_t>((width - size) / stride + 1) * static_cast<std::size_t>((height - size) / stride + 1);
}

std::vector<Patch> patchify(const RasterImage& image, const std::optional<MaskImage>& mask, int size, int stride) {
  if (stride < 1) throw ConfigError("patchify: stride must be >= 1, got " + std::to_string(stride));
  if (size < 1) throw ConfigError("patchify: size must be >= 1, got " + std::to_string(size));
  if (size > image.width || size > image.height) {
    throw ShapeError("patchify: patch size " + std::to_string(size) + " exceeds image " + std::to_string(image.width) +
                     "x" + std::to_string(image.height));
  }
  if (mask && (mask->width != image.width || mask->height != image.height)) {
    throw ShapeError("patchify: mask dimensions differ from image");
  }
  std::vector<Patch> out;
  out.reserve(patch_count(image.width, image.height, size, stride));
  for (int y = 0; y + size <= image.height; y += stride) {
    for (int x = 0; x + size <= image.width; x += stride) {
      Patch p;
      p.x = x;
      p.y = y;
      p.image = crop(image, x, y, size, size);
      if (mask) p.mask = MaskImage::from_raster(crop(mask->to_raster(), x, y, size, size));
      out.push_back(std::move(p));
    }
  }
  return out;
}

}  // namespace aquaseg
