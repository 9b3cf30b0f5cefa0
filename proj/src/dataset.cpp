#include "aquaseg/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "aquaseg/errors.hpp"

namespace aquaseg {

namespace {

constexpr const char* kManifestHeader = "image_path,mask_path,role,split";

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && s[i] == ' ') ++i;
  return s.substr(i);
}

}  // namespace

std::string_view to_string(Role role) {
  switch (role) {
    case Role::hr_labelled:
      return "hr_labelled";
    case Role::vhr_labelled:
      return "vhr_labelled";
    case Role::vhr_unlabelled:
      return "vhr_unlabelled";
  }
  return "?";
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train:
      return "train";
    case Split::val:
      return "val";
    case Split::test:
      return "test";
  }
  return "?";
}

Role parse_role(std::string_view text) {
  if (text == "hr_labelled") return Role::hr_labelled;
  if (text == "vhr_labelled") return Role::vhr_labelled;
  if (text == "vhr_unlabelled") return Role::vhr_unlabelled;
  throw ConfigError("unknown role '" + std::string(text) + "'");
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "val") return Split::val;
  if (text == "test") return Split::test;
  throw ConfigError("unknown split '" + std::string(text) + "'");
}

std::vector<std::size_t> DatasetManifest::indices(Role role, Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].role == role && entries[i].split == split) out.push_back(i);
  }
  return out;
}

std::filesystem::path DatasetManifest::resolve(const std::string& relative) const {
  const std::filesystem::path p(relative);
  return p.is_absolute() ? p : directory / p;
}

void DatasetManifest::validate() const {
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    if (e.image_path.empty()) throw ConfigError("manifest entry " + std::to_string(i) + " has no image_path");
    const bool labelled = e.role != Role::vhr_unlabelled;
    if (labelled && e.mask_path.empty()) {
      throw ConfigError("manifest entry " + std::to_string(i) + " (" + std::string(to_string(e.role)) +
                        ") requires a mask_path");
    }
    if (!labelled && !e.mask_path.empty()) {
      throw ConfigError("manifest entry " + std::to_string(i) + " is vhr_unlabelled but has a mask_path");
    }
  }
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open manifest '" + path.string() + "'");
  DatasetManifest m;
  m.directory = path.parent_path();
  std::string line;
  if (!std::getline(f, line) || trim(line) != kManifestHeader) {
    throw FormatError(FormatError::Kind::malformed,
                      "manifest '" + path.string() + "' must start with header '" + kManifestHeader + "'");
  }
  int line_no = 1;
  while (std::getline(f, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 4) {
      throw FormatError(FormatError::Kind::malformed,
                        "manifest line " + std::to_string(line_no) + ": expected 4 fields, got " +
                            std::to_string(fields.size()));
    }
    m.entries.push_back({trim(fields[0]), trim(fields[1]), parse_role(trim(fields[2])), parse_split(trim(fields[3]))});
  }
  m.validate();
  return m;
}

std::string manifest_csv(const DatasetManifest& manifest) {
  std::string out = std::string(kManifestHeader) + "\n";
  for (const auto& e : manifest.entries) {
    out += e.image_path + "," + e.mask_path + "," + std::string(to_string(e.role)) + "," +
           std::string(to_string(e.split)) + "\n";
  }
  return out;
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  manifest.validate();
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f << manifest_csv(manifest);
  if (!f) throw IoError("failed writing '" + path.string() + "'");
}

BandStats compute_band_stats(std::span<const RasterImage> images) {
  if (images.empty()) throw ConfigError("cannot compute band statistics from zero images");
  const int bands = images.front().bands;
  std::vector<double> sum(bands, 0.0), sumsq(bands, 0.0);
  double count = 0.0;
  for (const auto& img : images) {
    if (img.bands != bands) throw ShapeError("inconsistent band counts while computing statistics");
    for (int b = 0; b < bands; ++b) {
      for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
          const double v = img.value(b, y, x);
          sum[b] += v;
          sumsq[b] += v * v;
        }
      }
    }
    count += static_cast<double>(img.plane());
  }
  BandStats s;
  for (int b = 0; b < bands; ++b) {
    const double mean = sum[b] / count;
    const double var = std::max(sumsq[b] / count - mean * mean, 0.0);
    s.mean.push_back(mean);
    s.std.push_back(std::sqrt(var));
  }
  return s;
}

BandStats compute_train_band_stats(const DatasetManifest& manifest) {
  std::vector<RasterImage> images;
  for (const auto& e : manifest.entries) {
    if (e.split == Split::train) images.push_back(read_raster(manifest.resolve(e.image_path)));
  }
  if (images.empty()) throw ConfigError("manifest has no train-split entries to compute band statistics from");
  return compute_band_stats(images);
}

void write_band_stats(const BandStats& stats, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  char buf[96];
  for (std::size_t b = 0; b < stats.mean.size(); ++b) {
    std::snprintf(buf, sizeof buf, "%zu %.17g %.17g\n", b, stats.mean[b], stats.std[b]);
    f << buf;
  }
  if (!f) throw IoError("failed writing '" + path.string() + "'");
}

BandStats read_band_stats(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("missing band statistics file '" + path.string() + "'");
  BandStats s;
  std::size_t band = 0;
  double mean = 0.0, sd = 0.0;
  while (f >> band >> mean >> sd) {
    if (band != s.mean.size()) throw FormatError(FormatError::Kind::malformed, "band_stats.txt: bands out of order");
    s.mean.push_back(mean);
    s.std.push_back(sd);
  }
  if (!f.eof() || s.mean.empty()) throw FormatError(FormatError::Kind::malformed, "band_stats.txt: unreadable line");
  return s;
}

BandStats ensure_band_stats(const DatasetManifest& manifest) {
  const auto path = manifest.directory / BandStats::kFileName;
  if (std::filesystem::exists(path)) return read_band_stats(path);
  auto stats = compute_train_band_stats(manifest);
  write_band_stats(stats, path);
  return stats;
}

BandStats require_band_stats(const DatasetManifest& manifest) {
  return read_band_stats(manifest.directory / BandStats::kFileName);
}

Tensor<float> normalize(std::span<const RasterImage> images, const BandStats& stats) {
  if (images.empty()) throw ConfigError("normalize: empty batch");
  const auto& first = images.front();
  if (static_cast<std::size_t>(first.bands) != stats.mean.size()) {
    throw ConfigError("normalize: images have " + std::to_string(first.bands) + " bands but statistics cover " +
                      std::to_string(stats.mean.size()));
  }
  const Shape4 shape{static_cast<int>(images.size()), first.bands, first.height, first.width};
  std::vector<float> out(shape.numel());
  std::vector<double> scale(first.bands);
  for (int b = 0; b < first.bands; ++b) {
    scale[b] = 1.0 / std::sqrt(std::max(stats.std[b] * stats.std[b], BandStats::kVarianceFloor));
  }
  std::size_t o = 0;
  for (const auto& img : images) {
    if (img.bands != first.bands || img.width != first.width || img.height != first.height) {
      throw ShapeError("normalize: batch mixes raster sizes");
    }
    for (int b = 0; b < img.bands; ++b) {
      for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
          out[o++] = static_cast<float>((img.value(b, y, x) - stats.mean[b]) * scale[b]);
        }
      }
    }
  }
  return Tensor<float>::from_vector(shape, std::move(out));
}

Tensor<float> masks_to_tensor(std::span<const MaskImage> masks) {
  if (masks.empty()) throw ConfigError("masks_to_tensor: empty batch");
  const Shape4 shape{static_cast<int>(masks.size()), 1, masks.front().height, masks.front().width};
  std::vector<float> out;
  out.reserve(shape.numel());
  for (const auto& m : masks) {
    if (m.width != shape.w || m.height != shape.h) throw ShapeError("masks_to_tensor: batch mixes mask sizes");
    for (auto v : m.values) out.push_back(static_cast<float>(v));
  }
  return Tensor<float>::from_vector(shape, std::move(out));
}

BatchSampler::BatchSampler(std::vector<std::size_t> indices, std::size_t batch_size, Prng rng)
    : indices_(std::move(indices)), batch_(batch_size), rng_(rng) {
  if (indices_.empty()) throw ConfigError("batch sampler needs at least one entry");
  if (batch_ == 0) throw ConfigError("batch size must be positive");
  batch_ = std::min(batch_, indices_.size());
}

std::vector<std::size_t> BatchSampler::next() {
  if (epochs_ == 0 || cursor_ + batch_ > order_.size()) {
    order_ = indices_;
    rng_.shuffle(order_.begin(), order_.end());
    cursor_ = 0;
    ++epochs_;
  }
  std::vector<std::size_t> out(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                               order_.begin() + static_cast<std::ptrdiff_t>(cursor_ + batch_));
  cursor_ += batch_;
  return out;
}

std::vector<std::vector<std::size_t>> training_batches(std::span<const std::size_t> indices, std::size_t batch_size,
                                                       Prng& rng) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  std::vector<std::size_t> order(indices.begin(), indices.end());
  rng.shuffle(order.begin(), order.end());
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i + batch_size <= order.size(); i += batch_size) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(i + batch_size));
  }
  return out;
}

std::vector<std::vector<std::size_t>> evaluation_batches(std::span<const std::size_t> indices, std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < indices.size(); i += batch_size) {
    const std::size_t end = std::min(indices.size(), i + batch_size);
    out.emplace_back(indices.begin() + static_cast<std::ptrdiff_t>(i), indices.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

std::vector<std::vector<std::size_t>> iterate_batches(const DatasetManifest& manifest, Role role, Split split,
                                                      std::size_t batch_size, Prng& rng, bool training) {
  const auto idx = manifest.indices(role, split);
  return training ? training_batches(idx, batch_size, rng) : evaluation_batches(idx, batch_size);
}

SampleStore::SampleStore(const DatasetManifest& manifest, BandStats stats) : manifest_(manifest), stats_(std::move(stats)) {}

const SampleStore::Cached& SampleStore::load(std::size_t entry) {
  auto it = cache_.find(entry);
  if (it != cache_.end()) return it->second;
  if (entry >= manifest_.entries.size()) throw ConfigError("manifest entry index out of range");
  const auto& e = manifest_.entries[entry];
  Cached c;
  try {
    c.image = read_raster(manifest_.resolve(e.image_path));
    if (!e.mask_path.empty()) c.mask = MaskImage::from_raster(read_raster(manifest_.resolve(e.mask_path)));
  } catch (const Error& err) {
    throw IoError("unreadable manifest entry " + std::to_string(entry) + " (" + e.image_path + "): " + err.what());
  }
  return cache_.emplace(entry, std::move(c)).first->second;
}

Tensor<float> SampleStore::images(std::span<const std::size_t> entries) {
  std::vector<RasterImage> batch;
  for (auto e : entries) batch.push_back(load(e).image);
  return normalize(batch, stats_);
}

Tensor<float> SampleStore::masks(std::span<const std::size_t> entries) {
  std::vector<MaskImage> batch;
  for (auto e : entries) {
    const auto& c = load(e);
    if (!c.mask) {
      throw ConfigError("manifest entry " + std::to_string(e) + " (" + manifest_.entries[e].image_path + ") has no mask");
    }
    batch.push_back(*c.mask);
  }
  return masks_to_tensor(batch);
}

int SampleStore::bands() { return static_cast<int>(stats_.mean.size()); }

}  // namespace aquaseg
