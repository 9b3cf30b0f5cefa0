#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "aquaseg/random.hpp"
#include "aquaseg/raster.hpp"
#include "aquaseg/tensor.hpp"

namespace aquaseg {

enum class Role { hr_labelled, vhr_labelled, vhr_unlabelled };
enum class Split { train, val, test };

std::string_view to_string(Role role);
std::string_view to_string(Split split);
Role parse_role(std::string_view text);
Split parse_split(std::string_view text);

struct ManifestEntry {
  std::string image_path;  // relative to the manifest directory unless absolute
  std::string mask_path;   // empty for unlabelled entries
  Role role = Role::hr_labelled;
  Split split = Split::train;
};

/// CSV with header `image_path,mask_path,role,split`.
struct DatasetManifest {
  std::filesystem::path directory;
  std::vector<ManifestEntry> entries;

  /// Indices of entries with the given role and split, in file order.
  std::vector<std::size_t> indices(Role role, Split split) const;
  std::filesystem::path resolve(const std::string& relative) const;
  void validate() const;
};

DatasetManifest load_manifest(const std::filesystem::path& path);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
std::string manifest_csv(const DatasetManifest& manifest);

/// Per-band affine normalization statistics.
struct BandStats {
  std::vector<double> mean;
  std::vector<double> std;

  static constexpr double kVarianceFloor = 1e-6;
  static constexpr const char* kFileName = "band_stats.txt";
};

/// Mean and standard deviation per band, pooled over all pixels of the given images.
BandStats compute_band_stats(std::span<const RasterImage> images);
/// Statistics over every train-split entry of the manifest (all roles pooled).
BandStats compute_train_band_stats(const DatasetManifest& manifest);

/// Lines of "band mean std".
void write_band_stats(const BandStats& stats, const std::filesystem::path& path);
BandStats read_band_stats(const std::filesystem::path& path);

/// Reads <manifest dir>/band_stats.txt; computes and writes it first when absent.
BandStats ensure_band_stats(const DatasetManifest& manifest);
/// Reads <manifest dir>/band_stats.txt; throws IoError when absent.
BandStats require_band_stats(const DatasetManifest& manifest);

/// Stacks same-sized rasters into (n, bands, h, w) with (x - mean) / sqrt(max(var, floor)).
Tensor<float> normalize(std::span<const RasterImage> images, const BandStats& stats);
Tensor<float> masks_to_tensor(std::span<const MaskImage> masks);

/// Training-mode batch sampler: each epoch is one shuffled pass over `indices`
/// in full batches (the short remainder is dropped). Reshuffles when a pass is
/// exhausted, so streams of different lengths can cycle independently.
/// Batches larger than the index set are clamped to its size.
class BatchSampler {
 public:
  BatchSampler(std::vector<std::size_t> indices, std::size_t batch_size, Prng rng);

  std::vector<std::size_t> next();
  std::size_t batch_size() const { return batch_; }
  std::size_t batches_per_epoch() const { return indices_.size() / batch_; }
  std::uint64_t epochs_started() const { return epochs_; }

 private:
  std::vector<std::size_t> indices_;
  std::vector<std::size_t> order_;
  std::size_t batch_;
  std::size_t cursor_ = 0;
  std::uint64_t epochs_ = 0;
  Prng rng_;
};

/// One training epoch of batches (shuffled, remainder dropped).
std::vector<std::vector<std::size_t>> training_batches(std::span<const std::size_t> indices, std::size_t batch_size,
                                                       Prng& rng);
/// Evaluation order: sequential, final short batch kept.
std::vector<std::vector<std::size_t>> evaluation_batches(std::span<const std::size_t> indices, std::size_t batch_size);

/// iterate_batches: batches of manifest-entry indices for one epoch of a role/split.
std::vector<std::vector<std::size_t>> iterate_batches(const DatasetManifest& manifest, Role role, Split split,
                                                      std::size_t batch_size, Prng& rng, bool training = true);

/// Loads entries on first use and keeps normalized images and masks in memory.
class SampleStore {
 public:
  SampleStore(const DatasetManifest& manifest, BandStats stats);

  Tensor<float> images(std::span<const std::size_t> entries);
  Tensor<float> masks(std::span<const std::size_t> entries);
  int bands();

 private:
  struct Cached {
    RasterImage image;
    std::optional<MaskImage> mask;
  };
  const Cached& load(std::size_t entry);

  const DatasetManifest& manifest_;
  BandStats stats_;
  std::map<std::size_t, Cached> cache_;
};

}  // namespace aquaseg
