#include "aquaseg/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "aquaseg/errors.hpp"
#include "aquaseg/ops.hpp"

namespace aquaseg {

namespace {

constexpr std::array<double, 4> kLandBase{0.30, 0.28, 0.22, 0.45};
constexpr std::array<double, 4> kWaterBase{0.08, 0.12, 0.20, 0.05};

void paint_segment(MaskImage& mask, double x0, double y0, double x1, double y1, double half_width) {
  const int xmin = std::max(0, static_cast<int>(std::floor(std::min(x0, x1) - half_width)));
  const int xmax = std::min(mask.width - 1, static_cast<int>(std::ceil(std::max(x0, x1) + half_width)));
  const int ymin = std::max(0, static_cast<int>(std::floor(std::min(y0, y1) - half_width)));
  const int ymax = std::min(mask.height - 1, static_cast<int>(std::ceil(std::max(y0, y1) + half_width)));
  const double dx = x1 - x0, dy = y1 - y0;
  const double len2 = dx * dx + dy * dy;
  const double hw2 = half_width * half_width;
  for (int y = ymin; y <= ymax; ++y) {
    for (int x = xmin; x <= xmax; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      double t = len2 > 0.0 ? ((px - x0) * dx + (py - y0) * dy) / len2 : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      const double ex = x0 + t * dx - px, ey = y0 + t * dy - py;
      if (ex * ex + ey * ey <= hw2) mask.values[static_cast<std::size_t>(y) * mask.width + x] = 1;
    }
  }
}

void paint_river(MaskImage& mask, const SynthConfig& c, Prng& rng) {
  const double s = c.vhr_size;
  const double step = s / 32.0;
  const double half_width = rng.uniform(c.river_half_width_min, c.river_half_width_max) * s;
  const int side = static_cast<int>(rng.below(4));
  const double along = rng.uniform(0.1, 0.9) * s;
  double x = 0, y = 0, heading = 0;
  switch (side) {
    case 0: x = along, y = 0, heading = std::numbers::pi / 2; break;   // top, heading down
    case 1: x = s, y = along, heading = std::numbers::pi; break;       // right, heading left
    case 2: x = along, y = s, heading = -std::numbers::pi / 2; break;  // bottom, heading up
    default: x = 0, y = along, heading = 0; break;                     // left, heading right
  }
  heading += rng.uniform(-0.6, 0.6);
  for (int i = 0; i < 64; ++i) {
    heading += 0.25 * rng.normal();
    const double nx = x + step * std::cos(heading), ny = y + step * std::sin(heading);
    paint_segment(mask, x, y, nx, ny, half_width);
    x = nx;
    y = ny;
    if (x < -half_width || y < -half_width || x > s + half_width || y > s + half_width) break;
  }
}

void paint_lake(MaskImage& mask, const SynthConfig& c, Prng& rng) {
  const double s = c.vhr_size;
  const double cx = rng.uniform(0.1, 0.9) * s, cy = rng.uniform(0.1, 0.9) * s;
  const double a = rng.uniform(c.lake_axis_min, c.lake_axis_max) * s;
  const double b = rng.uniform(c.lake_axis_min, c.lake_axis_max) * s;
  const double theta = rng.uniform(0.0, std::numbers::pi);
  const double ct = std::cos(theta), st = std::sin(theta);
  const double r = std::max(a, b);
  const int xmin = std::max(0, static_cast<int>(cx - r)), xmax = std::min(mask.width - 1, static_cast<int>(cx + r) + 1);
  const int ymin = std::max(0, static_cast<int>(cy - r)), ymax = std::min(mask.height - 1, static_cast<int>(cy + r) + 1);
  for (int y = ymin; y <= ymax; ++y) {
    for (int x = xmin; x <= xmax; ++x) {
      const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
      const double u = (dx * ct + dy * st) / a, v = (-dx * st + dy * ct) / b;
      if (u * u + v * v <= 1.0) mask.values[static_cast<std::size_t>(y) * mask.width + x] = 1;
    }
  }
}

// Smooth noise in [-1, 1]: bilinear interpolation of a coarse random lattice.
std::vector<double> value_noise(int size, int cells, Prng& rng) {
  const int g = cells + 1;
  std::vector<double> lattice(static_cast<std::size_t>(g) * g);
  for (auto& v : lattice) v = rng.uniform(-1.0, 1.0);
  std::vector<double> out(static_cast<std::size_t>(size) * size);
  const double scale = static_cast<double>(cells) / size;
  for (int y = 0; y < size; ++y) {
    const double fy = (y + 0.5) * scale;
    const int iy = std::min(static_cast<int>(fy), cells - 1);
    const double ty = fy - iy;
    for (int x = 0; x < size; ++x) {
      const double fx = (x + 0.5) * scale;
      const int ix = std::min(static_cast<int>(fx), cells - 1);
      const double tx = fx - ix;
      const double v00 = lattice[iy * g + ix], v01 = lattice[iy * g + ix + 1];
      const double v10 = lattice[(iy + 1) * g + ix], v11 = lattice[(iy + 1) * g + ix + 1];
      out[static_cast<std::size_t>(y) * size + x] =
          (1 - ty) * ((1 - tx) * v00 + tx * v01) + ty * ((1 - tx) * v10 + tx * v11);
    }
  }
  return out;
}

std::string scene_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%04d", index);
  return buf;
}

}  // namespace

std::string_view to_string(ShiftKind kind) {
  switch (kind) {
    case ShiftKind::none:
      return "none";
    case ShiftKind::radiometric:
      return "radiometric";
    case ShiftKind::texture:
      return "texture";
  }
  return "?";
}

ShiftKind parse_shift(std::string_view text) {
  if (text == "none") return ShiftKind::none;
  if (text == "radiometric") return ShiftKind::radiometric;
  if (text == "texture") return ShiftKind::texture;
  throw ConfigError("unknown shift '" + std::string(text) + "' (expected none, radiometric or texture)");
}

void SynthConfig::validate() const {
  if (hr_scenes < 0 || vhr_labelled_scenes < 0 || vhr_unlabelled_scenes < 0) {
    throw ConfigError("scene counts must be non-negative");
  }
  if (vhr_size < 8) throw ConfigError("vhr_size must be at least 8");
  if (factor < 1 || vhr_size % factor != 0) {
    throw ConfigError("factor " + std::to_string(factor) + " must divide vhr_size " + std::to_string(vhr_size));
  }
  if (rivers_min < 0 || rivers_max < rivers_min || lakes_min < 0 || lakes_max < lakes_min) {
    throw ConfigError("shape count ranges must satisfy 0 <= min <= max");
  }
  if (river_half_width_min <= 0 || river_half_width_max < river_half_width_min || lake_axis_min <= 0 ||
      lake_axis_max < lake_axis_min) {
    throw ConfigError("shape size ranges must be positive with min <= max");
  }
  if (noise_amplitude < 0 || texture_sigma < 0) throw ConfigError("noise amplitudes must be non-negative");
}

MaskImage synth_water_mask(const SynthConfig& config, Prng& rng) {
  MaskImage mask{config.vhr_size, config.vhr_size,
                 std::vector<std::uint8_t>(static_cast<std::size_t>(config.vhr_size) * config.vhr_size, 0)};
  const int rivers = config.rivers_min + static_cast<int>(rng.below(config.rivers_max - config.rivers_min + 1));
  const int lakes = config.lakes_min + static_cast<int>(rng.below(config.lakes_max - config.lakes_min + 1));
  for (int i = 0; i < rivers; ++i) paint_river(mask, config, rng);
  for (int i = 0; i < lakes; ++i) paint_lake(mask, config, rng);
  return mask;
}

MaskImage downsample_mask(const MaskImage& mask, int factor) {
  if (factor < 1 || mask.width % factor != 0 || mask.height % factor != 0) {
    throw ShapeError("downsample_mask: factor " + std::to_string(factor) + " does not divide the mask");
  }
  MaskImage out{mask.width / factor, mask.height / factor, {}};
  out.values.resize(static_cast<std::size_t>(out.width) * out.height);
  const int threshold = factor * factor;  // compared against 2 * count: coverage >= 0.5
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      int count = 0;
      for (int i = 0; i < factor; ++i) {
        for (int j = 0; j < factor; ++j) count += mask.at(y * factor + i, x * factor + j);
      }
      out.values[static_cast<std::size_t>(y) * out.width + x] = 2 * count >= threshold ? 1 : 0;
    }
  }
  return out;
}

SynthScene synth_scene(const SynthConfig& config, int index) {
  config.validate();
  Prng rng = Prng::derive(config.seed, (static_cast<std::uint64_t>(index) << 8) | stream::synth);
  const int s = config.vhr_size;
  SynthScene scene;
  scene.vhr_mask = synth_water_mask(config, rng);

  std::array<double, 4> land{}, water{};
  for (int b = 0; b < 4; ++b) {
    land[b] = kLandBase[b] + rng.uniform(-0.03, 0.03);
    water[b] = kWaterBase[b] + rng.uniform(-0.02, 0.02);
  }
  scene.vhr = RasterImage::zeros(s, s, 4, DType::f32);
  auto& px = std::get<std::vector<float>>(scene.vhr.pixels);
  const double amp = config.noise_amplitude;
  for (int b = 0; b < 4; ++b) {
    const auto smooth = value_noise(s, 8, rng);
    for (std::size_t i = 0; i < scene.vhr.plane(); ++i) {
      const double base = scene.vhr_mask.values[i] ? water[b] : land[b];
      const double v = base + amp * smooth[i] + 0.5 * amp * rng.normal();
      px[static_cast<std::size_t>(b) * scene.vhr.plane() + i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }

  // Block means are taken with the same kernel the network bridge uses.
  const int f = config.factor;
  std::vector<float> hr_values;
  {
    NoGradGuard no_grad;
    const auto vhr_t = Tensor<float>::from_vector(Shape4{1, 4, s, s}, px);
    const auto hr_t = avgpool_downsample(vhr_t, f);
    hr_values.assign(hr_t.data().begin(), hr_t.data().end());
  }
  switch (config.shift) {
    case ShiftKind::none:
      break;
    case ShiftKind::radiometric:
      for (auto& v : hr_values) {
        v = static_cast<float>(config.shift_gain * v + config.shift_offset);
      }
      break;
    case ShiftKind::texture:
      for (auto& v : hr_values) v = static_cast<float>(v + config.texture_sigma * rng.normal());
      break;
  }
  scene.hr.width = s / f;
  scene.hr.height = s / f;
  scene.hr.bands = 4;
  scene.hr.pixels = std::move(hr_values);
  scene.hr_mask = downsample_mask(scene.vhr_mask, f);
  return scene;
}

std::pair<Role, Split> synth_assignment(const SynthConfig& config, int index) {
  auto tail_split = [](int k, int n, int val, int test) {
    if (k >= n - test) return Split::test;
    if (k >= n - test - val) return Split::val;
    return Split::train;
  };
  if (index < config.hr_scenes) {
    const int n = config.hr_scenes;
    return {Role::hr_labelled, tail_split(index, n, n / 10, 0)};
  }
  index -= config.hr_scenes;
  if (index < config.vhr_labelled_scenes) {
    const int n = config.vhr_labelled_scenes;
    const int held = n >= 3 ? std::max(1, n / 6) : 0;
    return {Role::vhr_labelled, tail_split(index, n, held, held)};
  }
  index -= config.vhr_labelled_scenes;
  const int n = config.vhr_unlabelled_scenes;
  return {Role::vhr_unlabelled, tail_split(index, n, n / 5, 0)};
}

namespace {

ManifestEntry entry_for(const SynthConfig& config, int index) {
  const auto [role, split] = synth_assignment(config, index);
  const std::string dir = role == Role::hr_labelled ? "hr/" : "vhr/";
  const std::string stem = dir + scene_name(index);
  return {stem + ".aqr", role == Role::vhr_unlabelled ? "" : stem + "_mask.aqr", role, split};
}

}  // namespace

SynthDataset synth_generate(const SynthConfig& config) {
  config.validate();
  SynthDataset ds;
  for (int i = 0; i < config.total_scenes(); ++i) {
    ds.scenes.push_back(synth_scene(config, i));
    ds.manifest.entries.push_back(entry_for(config, i));
  }
  return ds;
}

DatasetManifest write_synth_dataset(const SynthConfig& config, const std::filesystem::path& out_dir) {
  config.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "hr", ec);
  std::filesystem::create_directories(out_dir / "vhr", ec);
  if (ec) throw IoError("cannot create output directory '" + out_dir.string() + "': " + ec.message());
  DatasetManifest manifest;
  manifest.directory = out_dir;
  for (int i = 0; i < config.total_scenes(); ++i) {
    const auto scene = synth_scene(config, i);
    const auto entry = entry_for(config, i);
    const bool hr = entry.role == Role::hr_labelled;
    write_raster(hr ? scene.hr : scene.vhr, out_dir / entry.image_path);
    if (!entry.mask_path.empty()) {
      write_raster((hr ? scene.hr_mask : scene.vhr_mask).to_raster(), out_dir / entry.mask_path);
    }
    manifest.entries.push_back(entry);
  }
  write_manifest(manifest, out_dir / "manifest.csv");
  write_band_stats(compute_train_band_stats(manifest), out_dir / BandStats::kFileName);
  return manifest;
}

}  // namespace aquaseg
