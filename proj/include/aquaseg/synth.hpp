#pragma once

#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

#include "aquaseg/dataset.hpp"
#include "aquaseg/raster.hpp"

namespace aquaseg {

enum class ShiftKind { none, radiometric, texture };

std::string_view to_string(ShiftKind kind);
ShiftKind parse_shift(std::string_view text);

/// Two-resolution synthetic water scenes. Each scene is drawn at VHR size;
/// its HR counterpart is the block-mean downsample with the configured
/// distribution shift applied to the radiometry.
struct SynthConfig {
  int hr_scenes = 60;
  int vhr_labelled_scenes = 12;
  int vhr_unlabelled_scenes = 4;
  int vhr_size = 512;
  int factor = 4;

  int rivers_min = 1;
  int rivers_max = 2;
  double river_half_width_min = 1.0 / 80.0;  // fractions of vhr_size
  double river_half_width_max = 1.0 / 32.0;
  int lakes_min = 0;
  int lakes_max = 2;
  double lake_axis_min = 1.0 / 20.0;
  double lake_axis_max = 1.0 / 7.0;

  double noise_amplitude = 0.05;

  ShiftKind shift = ShiftKind::none;
  double shift_gain = 1.0;
  double shift_offset = 0.1;
  double texture_sigma = 0.05;

  std::uint64_t seed = 0;

  int total_scenes() const { return hr_scenes + vhr_labelled_scenes + vhr_unlabelled_scenes; }
  int hr_size() const { return vhr_size / factor; }
  void validate() const;
};

struct SynthScene {
  RasterImage vhr;  // 4-band f32
  MaskImage vhr_mask;
  RasterImage hr;  // downsampled + shifted
  MaskImage hr_mask;
};

/// Water mask only (rivers as thick random-walk polylines, lakes as rotated ellipses).
MaskImage synth_water_mask(const SynthConfig& config, Prng& rng);
/// Scene `index` is a pure function of (config, index).
SynthScene synth_scene(const SynthConfig& config, int index);
/// HR mask: 1 where at least half of the factor x factor block is water.
MaskImage downsample_mask(const MaskImage& mask, int factor);

/// Role and split of scene `index`: scenes are ordered HR, VHR-labelled, VHR-unlabelled.
std::pair<Role, Split> synth_assignment(const SynthConfig& config, int index);

struct SynthDataset {
  std::vector<SynthScene> scenes;
  DatasetManifest manifest;  // paths relative to the output directory
};

SynthDataset synth_generate(const SynthConfig& config);

/// Writes scenes as AQR (hr/, vhr/), manifest.csv and band_stats.txt into `out_dir`.
DatasetManifest write_synth_dataset(const SynthConfig& config, const std::filesystem::path& out_dir);

}  // namespace aquaseg
