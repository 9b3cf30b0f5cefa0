#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "aquaseg/dataset.hpp"
#include "aquaseg/errors.hpp"
#include "aquaseg/ops.hpp"
#include "aquaseg/raster.hpp"
#include "aquaseg/synth.hpp"
#include "doctest.h"

using namespace aquaseg;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::path(AQUASEG_TEST_WORK_DIR) / "unit_data" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

RasterImage random_raster(int w, int h, int bands, Prng& rng) {
  auto img = RasterImage::zeros(w, h, bands, DType::f32);
  for (auto& v : std::get<std::vector<float>>(img.pixels)) v = static_cast<float>(rng.uniform());
  return img;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

SynthConfig small_synth(ShiftKind shift = ShiftKind::none) {
  SynthConfig c;
  c.hr_scenes = 6;
  c.vhr_labelled_scenes = 6;
  c.vhr_unlabelled_scenes = 2;
  c.vhr_size = 64;
  c.shift = shift;
  c.seed = 21;
  return c;
}

}  // namespace

TEST_CASE("raster round trips") {
  Prng rng(1);
  const auto dir = scratch("raster");
  const auto img = random_raster(64, 64, 4, rng);
  write_raster(img, dir / "a.aqr");
  const auto back = read_raster(dir / "a.aqr");
  CHECK(back.pixels == img.pixels);
  CHECK((back.width == 64 && back.height == 64 && back.bands == 4));

  MaskImage mask{5, 3, {0, 1, 1, 0, 1, 0, 0, 0, 1, 1, 1, 1, 0, 0, 0}};
  write_raster(mask.to_raster(), dir / "m.aqr");
  const auto m = MaskImage::from_raster(read_raster(dir / "m.aqr"));
  CHECK(m.values == mask.values);
  CHECK(read_raster(dir / "m.aqr").dtype() == DType::u8);
}

TEST_CASE("raster format errors") {
  Prng rng(2);
  const auto bytes = encode_raster(random_raster(8, 8, 4, rng));
  auto kind_of = [](std::vector<std::uint8_t> b) {
    try {
      decode_raster(b);
    } catch (const FormatError& e) {
      return e.kind();
    }
    FAIL("decode succeeded");
    return FormatError::Kind::malformed;
  };
  CHECK(kind_of({bytes.begin(), bytes.end() - 4}) == FormatError::Kind::truncated);
  CHECK(kind_of({bytes.begin(), bytes.begin() + 10}) == FormatError::Kind::truncated);
  auto magic = bytes;
  magic[1] = 'Z';
  CHECK(kind_of(magic) == FormatError::Kind::bad_magic);
  auto dtype = bytes;
  dtype[16] = 7;
  CHECK(kind_of(dtype) == FormatError::Kind::unsupported_dtype);
  auto bands = bytes;
  bands[12] = 1;  // header now claims 1 band; payload holds 4
  CHECK(kind_of(bands) == FormatError::Kind::shape_mismatch);
  auto extra = bytes;
  extra.push_back(0);
  CHECK(kind_of(extra) == FormatError::Kind::shape_mismatch);
  CHECK_THROWS_AS(read_raster(scratch("missing") / "nope.aqr"), IoError);
  CHECK_THROWS_AS(RasterImage::zeros(4, 4, 3, DType::f32).validate(), ShapeError);
  CHECK_THROWS_AS((MaskImage{2, 1, {0, 2}}.validate()), ContractError);
}

TEST_CASE("patchify") {
  CHECK(patch_count(6000, 6000, 512, 512) == 121);
  CHECK(patch_count(130, 130, 64, 64) == 4);
  CHECK(patch_count(130, 130, 64, 32) == 9);

  Prng rng(3);
  const auto img = random_raster(130, 130, 4, rng);
  const auto patches = patchify(img, std::nullopt, 64, 64);
  REQUIRE(patches.size() == 4);
  CHECK((patches[1].x == 64 && patches[1].y == 0));
  CHECK((patches[2].x == 0 && patches[2].y == 64));
  CHECK(patches[3].image.value(2, 63, 63) == img.value(2, 127, 127));

  const auto whole = patchify(img, std::nullopt, 130, 130);
  REQUIRE(whole.size() == 1);
  CHECK(whole[0].image.pixels == img.pixels);

  MaskImage mask{130, 130, std::vector<std::uint8_t>(130 * 130, 0)};
  mask.values[65 * 130 + 70] = 1;
  const auto with_mask = patchify(img, mask, 64, 64);
  CHECK(with_mask[3].mask->at(1, 6) == 1);
  CHECK_THROWS_AS(patchify(img, std::nullopt, 131, 64), ShapeError);
}

TEST_CASE("normalization") {
  auto c = RasterImage::zeros(4, 4, 4, DType::f32);
  for (auto& v : std::get<std::vector<float>>(c.pixels)) v = 0.25f;
  const std::vector<RasterImage> constant{c};
  const auto stats = compute_band_stats(constant);
  const auto n = normalize(constant, stats);
  for (float v : n.data()) CHECK(v == 0.0f);

  Prng rng(4);
  std::vector<RasterImage> images;
  for (int i = 0; i < 6; ++i) images.push_back(random_raster(16, 16, 4, rng));
  const auto s = compute_band_stats(images);
  const auto a = normalize(images, s), b = normalize(images, s);
  CHECK(std::equal(a.data().begin(), a.data().end(), b.data().begin(), b.data().end()));
  for (int band = 0; band < 4; ++band) {
    double sum = 0, sq = 0, count = 0;
    for (int i = 0; i < 6; ++i) {
      for (int y = 0; y < 16; ++y) {
        for (int x = 0; x < 16; ++x) {
          const double v = a.at(i, band, y, x);
          sum += v, sq += v * v, ++count;
        }
      }
    }
    CHECK(std::abs(sum / count) < 1e-3);
    CHECK(std::abs(std::sqrt(sq / count - (sum / count) * (sum / count)) - 1.0) < 1e-3);
  }

  const auto dir = scratch("stats");
  write_band_stats(s, dir / BandStats::kFileName);
  const auto back = read_band_stats(dir / BandStats::kFileName);
  CHECK(back.mean == s.mean);
  CHECK(back.std == s.std);
  DatasetManifest m;
  m.directory = scratch("nostats");
  CHECK_THROWS_AS(require_band_stats(m), IoError);
}

TEST_CASE("manifest parsing") {
  const auto dir = scratch("manifest");
  {
    std::ofstream f(dir / "manifest.csv");
    f << "image_path,mask_path,role,split\n"
      << "a.aqr,a_mask.aqr,hr_labelled,train\n"
      << "b.aqr,,vhr_unlabelled,train\n"
      << "c.aqr,c_mask.aqr,vhr_labelled,val\n";
  }
  const auto m = load_manifest(dir / "manifest.csv");
  CHECK(m.entries.size() == 3);
  CHECK(m.indices(Role::vhr_labelled, Split::val) == std::vector<std::size_t>{2});
  CHECK(m.resolve("a.aqr") == dir / "a.aqr");
  write_manifest(m, dir / "again.csv");
  CHECK(slurp(dir / "again.csv") == slurp(dir / "manifest.csv"));

  CHECK_THROWS_AS(parse_role("lidar"), ConfigError);
  CHECK_THROWS_AS(parse_split("holdout"), ConfigError);
  {
    std::ofstream f(dir / "bad.csv");
    f << "image_path,mask_path,role,split\n"
      << "a.aqr,,hr_labelled,train\n";
  }
  CHECK_THROWS_AS(load_manifest(dir / "bad.csv"), ConfigError);
  {
    std::ofstream f(dir / "unknown.csv");
    f << "image_path,mask_path,role,split\n"
      << "a.aqr,a_mask.aqr,hr_labelled,someday\n";
  }
  CHECK_THROWS_AS(load_manifest(dir / "unknown.csv"), ConfigError);
}

TEST_CASE("batch iteration") {
  std::vector<std::size_t> idx(733);
  std::iota(idx.begin(), idx.end(), 0);
  Prng a(5), b(5);
  const auto e1 = training_batches(idx, 2, a), e2 = training_batches(idx, 2, b);
  CHECK(e1.size() == 366);
  CHECK(e1 == e2);
  std::set<std::size_t> seen;
  for (const auto& batch : e1) seen.insert(batch.begin(), batch.end());
  CHECK(seen.size() == 732);

  const auto val = evaluation_batches(idx, 4);
  CHECK(val.size() == 184);
  CHECK(val.back().size() == 1);
  std::vector<std::size_t> flat;
  for (const auto& batch : val) flat.insert(flat.end(), batch.begin(), batch.end());
  CHECK(flat == idx);

  BatchSampler sampler({1, 2, 3}, 5, Prng(6));
  CHECK(sampler.batch_size() == 3);
  CHECK(sampler.next().size() == 3);
  CHECK_THROWS_AS(BatchSampler({}, 1, Prng(1)), ConfigError);
}

TEST_CASE("synthetic scenes") {
  const auto cfg = small_synth();
  for (int i = 0; i < cfg.total_scenes(); ++i) {
    const auto s = synth_scene(cfg, i);
    std::size_t water = 0;
    double nir_in = 0, nir_out = 0;
    for (std::size_t k = 0; k < s.vhr_mask.values.size(); ++k) {
      const auto v = s.vhr_mask.values[k];
      CHECK(v <= 1);
      water += v;
      const double nir = s.vhr.value(3, static_cast<int>(k) / 64, static_cast<int>(k) % 64);
      (v ? nir_in : nir_out) += nir;
    }
    const double frac = static_cast<double>(water) / s.vhr_mask.values.size();
    CAPTURE(i);
    CHECK((frac > 0.0 && frac < 0.9));
    CHECK(nir_in / water < nir_out / (s.vhr_mask.values.size() - water));

    // Without a shift the HR scene is exactly the block mean.
    const auto vhr = Tensor<float>::from_vector({1, 4, 64, 64}, std::get<std::vector<float>>(s.vhr.pixels));
    const auto down = avgpool_downsample(vhr, cfg.factor);
    CHECK(std::equal(down.data().begin(), down.data().end(), std::get<std::vector<float>>(s.hr.pixels).begin()));
  }

  auto empty = cfg;
  empty.rivers_min = empty.rivers_max = 0;
  empty.lakes_min = empty.lakes_max = 0;
  const auto blank = synth_scene(empty, 0);
  for (auto v : blank.vhr_mask.values) CHECK(v == 0);
}

TEST_CASE("radiometric shift moves HR band means by the offset") {
  auto none = small_synth(), shifted = small_synth(ShiftKind::radiometric);
  shifted.shift_offset = 0.1;
  for (int i = 0; i < 3; ++i) {
    const auto a = synth_scene(none, i), b = synth_scene(shifted, i);
    for (int band = 0; band < 4; ++band) {
      double ma = 0, mb = 0;
      for (int y = 0; y < a.hr.height; ++y) {
        for (int x = 0; x < a.hr.width; ++x) ma += a.hr.value(band, y, x), mb += b.hr.value(band, y, x);
      }
      CHECK(std::abs((mb - ma) / a.hr.plane() - 0.1) < 1e-5);
    }
  }
}

TEST_CASE("synthetic dataset on disk") {
  const auto cfg = small_synth(ShiftKind::texture);
  const auto d1 = scratch("synth1"), d2 = scratch("synth2");
  const auto m = write_synth_dataset(cfg, d1);
  write_synth_dataset(cfg, d2);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(d1)) {
    if (!e.is_regular_file()) continue;
    ++files;
    CHECK(slurp(e.path()) == slurp(d2 / fs::relative(e.path(), d1)));
  }
  CHECK(files == 2 + 2 * 12 + 2);
  std::set<Role> roles;
  for (const auto& e : m.entries) roles.insert(e.role);
  CHECK(roles.size() == 3);
  CHECK(!m.indices(Role::hr_labelled, Split::train).empty());
  CHECK(fs::exists(d1 / BandStats::kFileName));

  auto bad = cfg;
  bad.factor = 3;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("sample store loads and normalizes") {
  const auto dir = scratch("store");
  const auto m = write_synth_dataset(small_synth(), dir);
  SampleStore store(m, require_band_stats(m));
  const auto idx = m.indices(Role::vhr_labelled, Split::train);
  const std::vector<std::size_t> two{idx[0], idx[1]};
  CHECK(store.images(two).shape() == Shape4{2, 4, 64, 64});
  CHECK(store.masks(two).shape() == Shape4{2, 1, 64, 64});
  const auto unl = m.indices(Role::vhr_unlabelled, Split::train);
  const std::vector<std::size_t> one{unl[0]};
  CHECK_THROWS_AS(store.masks(one), ConfigError);
}
