// Acceptance suite: one PASS/FAIL line per criterion.
// Usage: acceptance [criterion numbers...]   (no arguments runs all eight)

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>
#include <string>

#include "aquaseg/checkpoint.hpp"
#include "aquaseg/cli.hpp"
#include "aquaseg/combined.hpp"
#include "aquaseg/errors.hpp"
#include "aquaseg/raster.hpp"
#include "aquaseg/synth.hpp"
#include "aquaseg/trainer.hpp"
#include "golden.hpp"
#include "gradient_suite.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace aquaseg;

namespace {

// Pinned tolerances and budgets.
constexpr double kGradRelTol = 1e-4;
constexpr int kGradSeeds = 20;
constexpr double kGradBudgetSeconds = 120.0;
constexpr double kOracleTol = 1e-6;
constexpr int kOracleShapes = 100;
constexpr int kMetricPairs = 1000;
constexpr int kCompositionSteps = 10;
constexpr double kOverfitIou = 0.95;
constexpr int kOverfitEpochs = 300;
constexpr double kOverfitLossRatio = 0.2;
constexpr double kOverfitBudgetSeconds = 300.0;
constexpr double kAblationBudgetSeconds = 1800.0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string format(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

fs::path work_dir(const std::string& name) {
  const fs::path p = fs::path(AQUASEG_TEST_WORK_DIR) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

int cli(std::vector<std::string> args) {
  std::fflush(stdout);
  return run_cli(args);
}

// ---------------------------------------------------------------------------

Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string worst_name;
  int evaluated = 0;
  const auto checks = gradsuite::checks();
  for (std::size_t i = 0; i < checks.size(); ++i) {
    for (int seed = 0; seed < kGradSeeds; ++seed) {
      Prng rng = Prng::derive(static_cast<std::uint64_t>(seed), 1000 + i);
      const double err = checks[i].run(rng);
      ++evaluated;
      if (!(err <= worst)) {
        worst = err;
        worst_name = checks[i].name;
      }
    }
  }
  const double elapsed = seconds_since(t0);
  return {worst < kGradRelTol && elapsed < kGradBudgetSeconds,
          format("%zu ops x %d seeds, worst rel err %.2e (%s) < %.0e, %.1fs < %.0fs", checks.size(), kGradSeeds, worst,
                 worst_name.c_str(), kGradRelTol, elapsed, kGradBudgetSeconds)};
}

Outcome oracle_equivalence() {
  Prng rng(20240601);
  double worst_conv = 0, worst_convt = 0, worst_pool = 0, worst_avg = 0, worst_up = 0;
  auto pick = [&](int lo, int hi) { return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1))); };
  for (int t = 0; t < kOracleShapes; ++t) {
    {
      const int n = pick(1, 2), c = pick(1, 4), o = pick(1, 5), k = pick(1, 3), s = pick(1, 2), p = pick(0, 2);
      int h, w;
      do {
        h = (pick(1, 6) - 1) * s + k - 2 * p;
        w = (pick(1, 6) - 1) * s + k - 2 * p;
      } while (h < 1 || w < 1);
      const auto x = oracle::random_tensor<double>({n, c, h, w}, rng);
      const auto wt = oracle::random_tensor<double>({o, c, k, k}, rng);
      const bool with_bias = rng.uniform() < 0.5;
      const auto b = oracle::random_tensor<double>({1, o, 1, 1}, rng);
      const auto y = conv2d(x, wt, with_bias ? b : Tensor<double>(), s, p);
      const auto ref = oracle::conv2d(oracle::from(x), oracle::from(wt),
                                      with_bias ? oracle::from(b).v : std::vector<double>{}, s, p);
      worst_conv = std::max(worst_conv, oracle::max_abs_diff(oracle::from(y), ref));
    }
    {
      const int n = pick(1, 2), c = pick(1, 4), o = pick(1, 4), k = pick(1, 3), s = pick(1, 2);
      const auto x = oracle::random_tensor<double>({n, c, pick(1, 5), pick(1, 5)}, rng);
      const auto wt = oracle::random_tensor<double>({c, o, k, k}, rng);
      worst_convt = std::max(worst_convt, oracle::max_abs_diff(oracle::from(conv_transpose2d(x, wt, s)),
                                                               oracle::conv_transpose2d(oracle::from(x), oracle::from(wt), s)));
    }
    {
      const int k = pick(2, 3);
      const auto x = oracle::random_tensor<double>({pick(1, 2), pick(1, 3), k * pick(1, 4), k * pick(1, 4)}, rng);
      worst_pool = std::max(worst_pool, oracle::max_abs_diff(oracle::from(maxpool2d(x, k)), oracle::maxpool2d(oracle::from(x), k)));
    }
    {
      const int f = pick(1, 4);
      const auto x = oracle::random_tensor<double>({pick(1, 2), pick(1, 3), f * pick(1, 4), f * pick(1, 4)}, rng);
      worst_avg = std::max(worst_avg, oracle::max_abs_diff(oracle::from(avgpool_downsample(x, f)), oracle::avgpool(oracle::from(x), f)));
    }
    {
      const int f = pick(1, 4);
      const auto x = oracle::random_tensor<double>({pick(1, 2), pick(1, 3), pick(1, 5), pick(1, 5)}, rng);
      worst_up = std::max(worst_up, oracle::max_abs_diff(oracle::from(upsample_nearest(x, f)), oracle::upsample(oracle::from(x), f)));
    }
  }
  int metric_mismatches = 0;
  for (int t = 0; t < kMetricPairs; ++t) {
    const double dp = rng.uniform(), dg = rng.uniform();
    std::vector<std::uint8_t> p(64), g(64);
    for (int i = 0; i < 64; ++i) {
      p[i] = rng.uniform() < dp;
      g[i] = rng.uniform() < dg;
    }
    if (t % 100 == 0) std::fill(p.begin(), p.end(), 0);  // exercise the empty conventions
    if (t % 200 == 0) std::fill(g.begin(), g.end(), 0);
    metric_mismatches += iou_metric(p, g) != oracle::iou(p, g);
    metric_mismatches += dice_metric(p, g) != oracle::dice(p, g);
  }
  const double worst = std::max({worst_conv, worst_convt, worst_pool, worst_avg, worst_up});
  return {worst < kOracleTol && metric_mismatches == 0,
          format("%d shapes/op: conv2d %.1e, conv_transpose2d %.1e, maxpool2d %.1e, avgpool %.1e, upsample %.1e (< %.0e); "
                 "%d IoU/Dice pairs, %d mismatches",
                 kOracleShapes, worst_conv, worst_convt, worst_pool, worst_avg, worst_up, kOracleTol, kMetricPairs,
                 metric_mismatches)};
}

bool grads_all_zero(const std::vector<NamedParameter<float>>& params) {
  for (const auto& p : params) {
    for (float g : p.tensor.grad()) {
      if (g != 0.0f) return false;
    }
  }
  return true;
}

Outcome loss_composition() {
  int identity_failures = 0, isolation_failures = 0, l3_reach_failures = 0, empty_failures = 0;
  double worst_double_gap = 0.0;
  for (int step = 0; step < kCompositionSteps; ++step) {
    Prng rng = Prng::derive(static_cast<std::uint64_t>(step), 77);
    UNetModel<float> u1(UNetConfig::from_preset("micro"), rng);
    UNetModel<float> u2(UNetConfig::from_preset("micro"), rng);
    CombinedModel<float> model(std::move(u1), std::move(u2), CombinedConfig{});
    TriBatch<float> batch{oracle::random_tensor<float>({4, 4, 16, 16}, rng), oracle::random_mask<float>({4, 1, 16, 16}, rng),
                          oracle::random_tensor<float>({2, 4, 32, 32}, rng), oracle::random_mask<float>({2, 1, 32, 32}, rng),
                          oracle::random_tensor<float>({1, 4, 32, 32}, rng)};
    const auto r = combined_forward(model, batch);
    const float l1 = static_cast<float>(r.l1), l2 = static_cast<float>(r.l2), l3 = static_cast<float>(r.l3);
    const float recomputed = (1.0f * l1 + 1.0f * l2) + 0.1f * l3;
    identity_failures += static_cast<float>(r.total) != recomputed;
    worst_double_gap = std::max(worst_double_gap, std::abs(r.total - (1.0 * r.l1 + 1.0 * r.l2 + 0.1 * r.l3)));

    const auto& p1 = model.unet1().parameters();
    const auto& p2 = model.unet2().parameters();
    model.zero_grad();
    backward(r.l1_node);
    isolation_failures += !grads_all_zero(p2) || grads_all_zero(p1);
    model.zero_grad();
    backward(r.l2_node);
    isolation_failures += !grads_all_zero(p1) || grads_all_zero(p2);
    model.zero_grad();
    backward(r.l3_node);
    l3_reach_failures += grads_all_zero(p1) || grads_all_zero(p2);

    batch.vhr_unlabelled = {};
    const auto e = combined_forward(model, batch);
    empty_failures += e.has_l3 || static_cast<float>(e.total) != static_cast<float>(e.l1) + static_cast<float>(e.l2);
  }
  return {identity_failures + isolation_failures + l3_reach_failures + empty_failures == 0 && worst_double_gap < 1e-6,
          format("%d steps: total == (1*l1 + 1*l2) + 0.1*l3 bitwise (%d failures, max gap vs double %.1e); "
                 "dL1/d(unet2) == 0 and dL2/d(unet1) == 0 (%d failures); L3 reaches both nets (%d failures); "
                 "empty unlabelled stream total == l1 + l2 (%d failures)",
                 kCompositionSteps, identity_failures, worst_double_gap, isolation_failures, l3_reach_failures,
                 empty_failures)};
}

Outcome overfit_capability() {
  const auto dir = work_dir("overfit");
  SynthConfig sc;
  sc.vhr_size = 64;
  sc.seed = 5;
  DatasetManifest manifest;
  manifest.directory = dir;
  for (int i = 0; i < 16; ++i) {
    const auto scene = synth_scene(sc, i);
    const std::string stem = format("patch_%02d", i);
    write_raster(scene.vhr, dir / (stem + ".aqr"));
    write_raster(scene.vhr_mask.to_raster(), dir / (stem + "_mask.aqr"));
    manifest.entries.push_back({stem + ".aqr", stem + "_mask.aqr", Role::vhr_labelled, Split::train});
  }
  write_manifest(manifest, dir / "manifest.csv");
  manifest = load_manifest(dir / "manifest.csv");

  auto config = TrainConfig::defaults(TrainMode::unet_vhr);
  config.epochs = kOverfitEpochs;
  config.batch_size = 4;
  const auto t0 = Clock::now();
  const auto result = train_unet(config, manifest);
  const double elapsed = seconds_since(t0);
  const auto report = evaluate_model(inference_model(result.checkpoint), manifest, Role::vhr_labelled, Split::train,
                                     ensure_band_stats(manifest));
  const auto losses = result.log.epoch_mean_totals();
  const double ratio = losses.back() / losses.front();
  return {report.mean_iou >= kOverfitIou && elapsed < kOverfitBudgetSeconds && ratio < kOverfitLossRatio,
          format("micro U-Net, 16 patches 64x64, %d epochs: training IoU %.4f >= %.2f (Dice %.4f), "
                 "loss epoch %d / epoch 1 = %.3f < %.1f, %.1fs < %.0fs",
                 kOverfitEpochs, report.mean_iou, kOverfitIou, report.mean_dice, kOverfitEpochs, ratio,
                 kOverfitLossRatio, elapsed, kOverfitBudgetSeconds)};
}

Outcome determinism() {
  const auto dir = work_dir("determinism");
  if (cli({"synth", "--out", (dir / "data").string(), "--scenes", "12,6,2", "--vhr-size", "64", "--seed", "3",
           "--shift", "radiometric"}) != 0) {
    return {false, "synth failed"};
  }
  const auto manifest = (dir / "data" / "manifest.csv").string();
  int identical = 0, compared = 0;
  for (const std::string mode : {"unet", "combined"}) {
    for (const std::string run : {"a", "b"}) {
      const auto ckpt = (dir / (mode + "_" + run + ".aqck")).string();
      if (cli({"train", "--mode", mode, "--manifest", manifest, "--epochs", "2", "--seed", "7", "--ckpt", ckpt}) != 0) {
        return {false, "train " + mode + " failed"};
      }
    }
    for (const std::string suffix : {".aqck", ".aqck.log.csv"}) {
      const auto a = slurp(dir / (mode + "_a" + suffix));
      const auto b = slurp(dir / (mode + "_b" + suffix));
      ++compared;
      identical += !a.empty() && a == b;
    }
  }
  return {identical == compared,
          format("cmd_train twice per mode (unet, combined), seed 7: %d/%d TrainLog CSVs and checkpoints bitwise identical",
                 identical, compared)};
}

Outcome ablation_report() {
  const auto dir = work_dir("ablation");
  const auto t0 = Clock::now();
  if (cli({"synth", "--out", (dir / "data").string(), "--scenes", "60,12,4", "--vhr-size", "128", "--factor", "4",
           "--shift", "radiometric", "--seed", "11"}) != 0) {
    return {false, "synth failed"};
  }
  const auto csv = dir / "table.csv";
  if (cli({"ablate", "--manifest", (dir / "data" / "manifest.csv").string(), "--sizes", "8,6,4,3,2", "--seed", "11",
           "--csv", csv.string()}) != 0) {
    return {false, "ablate failed"};
  }
  const double elapsed = seconds_since(t0);
  std::istringstream in(slurp(csv));
  std::string line;
  std::getline(in, line);
  const bool header_ok = line == "training_samples,unet_iou,unet_dice,combined_iou,combined_dice";
  int rows = 0, bad_values = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++rows;
    std::istringstream ls(line);
    std::string cell;
    int cols = 0;
    while (std::getline(ls, cell, ',')) {
      if (cols++ == 0) continue;
      const double v = std::stod(cell);
      bad_values += !std::isfinite(v) || v < 0.0 || v > 1.0;
    }
    bad_values += cols != 5;
  }
  return {header_ok && rows == 5 && bad_values == 0 && elapsed < kAblationBudgetSeconds,
          format("60/12/4 scenes, shift=radiometric, sizes 8,6,4,3,2: %d rows x 4 metric columns, %d values outside "
                 "[0,1] or non-finite, %.0fs < %.0fs",
                 rows, bad_values, elapsed, kAblationBudgetSeconds)};
}

std::uint32_t le32(const std::string& bytes, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<std::uint8_t>(bytes[at + i]);
  return v;
}

Outcome format_stability() {
  int failures = 0;
  std::vector<std::string> notes;
  const fs::path data = AQUASEG_TEST_DATA_DIR;

  // Golden raster: regenerated bytes, byte layout, and decode/encode identity.
  const auto raster_bytes = slurp(data / golden::kRasterFile);
  const auto regenerated = encode_raster(golden::raster());
  if (raster_bytes != std::string(regenerated.begin(), regenerated.end())) ++failures, notes.push_back("raster bytes drifted");
  if (raster_bytes.size() != 20 + 4 * 4 * 4 * 4 || raster_bytes.compare(0, 4, "AQR1") != 0 || le32(raster_bytes, 4) != 4 ||
      le32(raster_bytes, 8) != 4 || le32(raster_bytes, 12) != 4 || le32(raster_bytes, 16) != 1) {
    ++failures, notes.push_back("raster header layout");
  }
  {
    const std::vector<std::uint8_t> b(raster_bytes.begin(), raster_bytes.end());
    if (encode_raster(decode_raster(b)) != b) ++failures, notes.push_back("raster re-encode");
  }

  // Golden micro checkpoint.
  const auto ckpt_bytes = slurp(data / golden::kCheckpointFile);
  const auto regen_ckpt = encode_checkpoint(golden::checkpoint());
  if (ckpt_bytes != std::string(regen_ckpt.begin(), regen_ckpt.end())) ++failures, notes.push_back("checkpoint bytes drifted");
  const std::vector<std::uint8_t> cb(ckpt_bytes.begin(), ckpt_bytes.end());
  if (ckpt_bytes.compare(0, 4, "AQCK") != 0 || le32(ckpt_bytes, 4) != 1) ++failures, notes.push_back("checkpoint header");
  std::size_t floats = 0;
  try {
    const auto ckpt = decode_checkpoint(cb);
    if (le32(ckpt_bytes, 8) != ckpt.tensors.size() + ckpt.metadata.size()) ++failures, notes.push_back("tensor count");
    for (const auto& t : ckpt.tensors) floats += t.values.size();
    if (encode_checkpoint(ckpt) != cb) ++failures, notes.push_back("checkpoint re-encode");
    const auto model = extract_unet(ckpt);
    if (model.parameter_count() != 46265 || floats != 46265) ++failures, notes.push_back("parameter count");
  } catch (const std::exception& e) {
    ++failures, notes.push_back(e.what());
  }

  // Random round trips.
  Prng rng(99);
  for (int t = 0; t < 50; ++t) {
    const int bands = rng.uniform() < 0.5 ? 1 : 4;
    const bool u8 = rng.uniform() < 0.5;
    auto img = RasterImage::zeros(1 + static_cast<int>(rng.below(40)), 1 + static_cast<int>(rng.below(40)), bands,
                                  u8 ? DType::u8 : DType::f32);
    if (u8) {
      for (auto& v : std::get<std::vector<std::uint8_t>>(img.pixels)) v = static_cast<std::uint8_t>(rng.below(256));
    } else {
      for (auto& v : std::get<std::vector<float>>(img.pixels)) v = static_cast<float>(rng.normal() * 1e3);
    }
    const auto bytes = encode_raster(img);
    const auto back = decode_raster(bytes);
    if (back.pixels != img.pixels || back.width != img.width || back.height != img.height || encode_raster(back) != bytes) {
      ++failures, notes.push_back("raster round trip");
      break;
    }
  }
  {
    Prng init(5);
    UNetModel<float> model(UNetConfig::from_preset("micro"), init);
    const auto dir = work_dir("format");
    save_checkpoint(model, dir / "m.aqck", {{"epoch", "3"}});
    const auto loaded = load_checkpoint(dir / "m.aqck");
    for (std::size_t i = 0; i < model.parameters().size(); ++i) {
      const auto a = model.parameters()[i].tensor.data();
      const auto b = loaded.parameters()[i].tensor.data();
      if (a.size() != b.size() || std::memcmp(a.data(), b.data(), a.size_bytes()) != 0) {
        ++failures, notes.push_back("checkpoint round trip");
        break;
      }
    }
  }
  std::string detail = format("golden %s (%zu bytes) and %s (%zu bytes, %zu floats) pinned; 50 random AQR and one AQCK "
                              "round trip",
                              golden::kRasterFile, raster_bytes.size(), golden::kCheckpointFile, ckpt_bytes.size(), floats);
  for (const auto& n : notes) detail += "; FAILED: " + n;
  return {failures == 0, detail};
}

Outcome shape_contracts() {
  int failures = 0, valid = 0, typed = 0;
  std::vector<std::string> notes;
  Prng rng(8);
  const UNetModel<float> micro(UNetConfig::from_preset("micro"), rng);
  NoGradGuard no_grad;
  for (int h : {64, 128, 256, 512}) {
    for (int w : {64, 128, 256, 512}) {
      const auto y = unet_forward(micro, Tensor<float>::zeros({1, 4, h, w}));
      ++valid;
      if (y.shape() != Shape4{1, 1, h, w}) ++failures, notes.push_back(format("%dx%d", h, w));
    }
  }
  {
    const auto y = unet_forward(micro, oracle::random_tensor<float>({2, 4, 64, 64}, rng));
    ++valid;
    if (y.shape() != Shape4{2, 1, 64, 64}) ++failures, notes.push_back("batch 2");
  }
  const UNetModel<float> lite(UNetConfig::from_preset("ternaus11-lite"), rng);
  {
    const auto y = unet_forward(lite, Tensor<float>::zeros({1, 4, 64, 64}));
    ++valid;
    if (y.shape() != Shape4{1, 1, 64, 64}) ++failures, notes.push_back("ternaus11-lite 64x64");
  }

  auto expect = [&]<typename E>(const char* what, auto&& fn, E*) {
    ++typed;
    try {
      fn();
      ++failures, notes.push_back(std::string(what) + ": no error");
    } catch (const E&) {
    } catch (const std::exception& e) {
      ++failures, notes.push_back(std::string(what) + ": wrong error type: " + e.what());
    }
  };
  expect("micro 60x64", [&] { unet_forward(micro, Tensor<float>::zeros({1, 4, 60, 64})); }, (ShapeError*)nullptr);
  expect("micro 64x100", [&] { unet_forward(micro, Tensor<float>::zeros({1, 4, 64, 100})); }, (ShapeError*)nullptr);
  expect("micro 3 bands", [&] { unet_forward(micro, Tensor<float>::zeros({1, 3, 64, 64})); }, (ShapeError*)nullptr);
  expect("lite 60x60", [&] { unet_forward(lite, Tensor<float>::zeros({1, 4, 60, 60})); }, (ShapeError*)nullptr);
  expect("lite 48x48", [&] { unet_forward(lite, Tensor<float>::zeros({1, 4, 48, 48})); }, (ShapeError*)nullptr);
  expect("conv2d non-integral", [&] {
    conv2d(Tensor<float>::zeros({1, 1, 6, 6}), Tensor<float>::zeros({1, 1, 3, 3}), Tensor<float>(), 2, 0);
  }, (ConfigError*)nullptr);
  expect("bridge_down 30/4", [&] { bridge_down(Tensor<float>::zeros({1, 4, 30, 32}), 4); }, (ShapeError*)nullptr);
  expect("bad preset", [&] { UNetConfig::from_preset("vgg99"); }, (ConfigError*)nullptr);
  expect("inconsistent config", [&] {
    UNetConfig c;
    c.encoder_channels = {8, 16};
    c.validate();
  }, (ConfigError*)nullptr);
  expect("combined stream", [&] {
    Prng r(1);
    UNetModel<float> u1(UNetConfig::from_preset("micro"), r);
    UNetModel<float> u2(UNetConfig::from_preset("micro"), r);
    CombinedModel<float> m(std::move(u1), std::move(u2), CombinedConfig{});
    combined_forward(m, TriBatch<float>{Tensor<float>::zeros({1, 4, 12, 16}), Tensor<float>::zeros({1, 1, 12, 16}),
                                        Tensor<float>::zeros({1, 4, 32, 32}), Tensor<float>::zeros({1, 1, 32, 32}), {}});
  }, (ShapeError*)nullptr);

  std::string detail = format("%d valid inputs over {64,128,256,512}^2 (+batch 2, ternaus11-lite) map to (n,1,h,w); "
                              "%d invalid inputs raise their typed errors",
                              valid, typed);
  for (const auto& n : notes) detail += "; FAILED: " + n;
  return {failures == 0, detail};
}

struct Criterion {
  int id;
  const char* name;
  Outcome (*run)();
};

}  // namespace

int main(int argc, char** argv) {
  const Criterion criteria[] = {
      {1, "gradient correctness", gradient_correctness},
      {2, "oracle equivalence", oracle_equivalence},
      {3, "loss composition", loss_composition},
      {4, "overfit capability", overfit_capability},
      {5, "determinism", determinism},
      {6, "ablation report", ablation_report},
      {7, "format stability", format_stability},
      {8, "shape/contract suite", shape_contracts},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failed = 0;
  std::vector<std::string> lines;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    Outcome o;
    const auto t0 = Clock::now();
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const auto line = format("[%s] criterion %d (%s): ", o.pass ? "PASS" : "FAIL", c.id, c.name) + o.detail +
                      format(" [%.1fs]", seconds_since(t0));
    std::printf("%s\n", line.c_str());
    std::fflush(stdout);
    lines.push_back(line);
    failed += !o.pass;
  }
  if (lines.size() > 1) {
    std::printf("\nsummary\n");
    for (const auto& l : lines) std::printf("%s\n", l.c_str());
  }
  return failed == 0 ? 0 : 1;
}
