#include "aquaseg/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "aquaseg/errors.hpp"
#include "aquaseg/raster.hpp"
#include "aquaseg/synth.hpp"
#include "aquaseg/trainer.hpp"

namespace aquaseg {

namespace {

struct SynthOptions {
  std::string out;
  std::string scenes = "60,12,4";
  int vhr_size = 512;
  int factor = 4;
  std::string shift = "none";
  double gain = 1.0;
  double offset = 0.1;
  double texture_sigma = 0.05;
  double noise = 0.05;
  std::uint64_t seed = 0;
};

struct PatchifyOptions {
  std::string image;
  std::string mask;
  std::string out;
  int size = 512;
  int stride = 0;
  std::string role = "vhr_labelled";
  std::string split = "train";
};

struct TrainOptions {
  std::string mode = "unet";
  std::string manifest;
  int epochs = -1;
  int batch = 4;
  int batch_hr = 4;
  int batch_vhr = 2;
  int batch_unlabelled = 1;
  double lr = 1e-3;
  double w1 = 1.0, w2 = 1.0, w3 = 0.1;
  int factor = 4;
  std::string preset = "micro";
  std::uint64_t seed = 0;
  std::string ckpt;
  std::string log;
  bool eval_every_epoch = false;
  double threshold = kDefaultThreshold;
  bool detach_vhr = false;
  bool detach_hr = false;
};

struct EvalOptions {
  std::string ckpt;
  std::string manifest;
  std::string split = "test";
  double threshold = kDefaultThreshold;
  std::string csv;
};

struct AblateOptions {
  std::string manifest;
  std::vector<std::size_t> sizes;
  int unet_epochs = 25;
  int combined_epochs = 40;
  int batch = 4;
  int batch_hr = 4;
  int batch_vhr = 2;
  int batch_unlabelled = 1;
  double lr = 1e-3;
  double w1 = 1.0, w2 = 1.0, w3 = 0.1;
  int factor = 4;
  std::string preset = "micro";
  std::uint64_t seed = 0;
  std::string split = "test";
  double threshold = kDefaultThreshold;
  std::string csv;
};

struct PredictOptions {
  std::string ckpt;
  std::string image;
  std::string out;
  std::string pgm;
  std::string manifest;
  double threshold = kDefaultThreshold;
};

const std::vector<std::string> kModes{"unet", "unet_vhr", "unet_hr", "combined"};
const std::vector<std::string> kShifts{"none", "radiometric", "texture"};
const std::vector<std::string> kSplits{"train", "val", "test"};
const std::vector<std::string> kRoles{"hr_labelled", "vhr_labelled", "vhr_unlabelled"};
const std::vector<std::string> kPresets{"micro", "ternaus11-lite"};

void print_resolved(const CLI::App& sub) {
  std::cout << "# " << sub.get_name() << " configuration\n" << sub.config_to_str(true, false) << std::flush;
}

SynthConfig synth_config(const SynthOptions& o) {
  SynthConfig c;
  std::vector<int> counts;
  std::stringstream ss(o.scenes);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      counts.push_back(std::stoi(item));
    } catch (const std::logic_error&) {
      throw ConfigError("--scenes expects N or HR,VHR_LABELLED,VHR_UNLABELLED, got '" + o.scenes + "'");
    }
  }
  if (counts.size() == 3) {
    c.hr_scenes = counts[0];
    c.vhr_labelled_scenes = counts[1];
    c.vhr_unlabelled_scenes = counts[2];
  } else if (counts.size() == 1 && counts[0] > 0) {
    // Apportion a single total in the default 60:12:4 ratio, at least one per role when n >= 3.
    const int n = counts[0];
    const int floor_each = n >= 3 ? 1 : 0;
    c.vhr_unlabelled_scenes = std::max(floor_each, static_cast<int>(std::lround(n * 4.0 / 76.0)));
    c.vhr_labelled_scenes = std::max(floor_each, static_cast<int>(std::lround(n * 12.0 / 76.0)));
    c.hr_scenes = n - c.vhr_labelled_scenes - c.vhr_unlabelled_scenes;
  } else {
    throw ConfigError("--scenes expects N or HR,VHR_LABELLED,VHR_UNLABELLED, got '" + o.scenes + "'");
  }
  c.vhr_size = o.vhr_size;
  c.factor = o.factor;
  c.shift = parse_shift(o.shift);
  c.shift_gain = o.gain;
  c.shift_offset = o.offset;
  c.texture_sigma = o.texture_sigma;
  c.noise_amplitude = o.noise;
  c.seed = o.seed;
  c.validate();
  return c;
}

int cmd_synth(const SynthOptions& o) {
  const auto config = synth_config(o);
  const auto manifest = write_synth_dataset(config, o.out);
  std::size_t counts[3] = {0, 0, 0};
  for (const auto& e : manifest.entries) ++counts[static_cast<int>(e.role)];
  std::printf("wrote %zu scenes to %s (hr_labelled %zu, vhr_labelled %zu, vhr_unlabelled %zu)\n",
              manifest.entries.size(), o.out.c_str(), counts[0], counts[1], counts[2]);
  return 0;
}

int cmd_patchify(const PatchifyOptions& o) {
  const auto image = read_raster(o.image);
  std::optional<MaskImage> mask;
  if (!o.mask.empty()) mask = MaskImage::from_raster(read_raster(o.mask));
  const Role role = parse_role(o.role);
  if ((role == Role::vhr_unlabelled) == mask.has_value()) {
    throw ConfigError(role == Role::vhr_unlabelled ? "unlabelled patches must not have a mask"
                                                   : "labelled patches need --mask");
  }
  const int stride = o.stride > 0 ? o.stride : o.size;
  const auto patches = patchify(image, mask, o.size, stride);
  std::error_code ec;
  std::filesystem::create_directories(o.out, ec);
  if (ec) throw IoError("cannot create '" + o.out + "': " + ec.message());
  DatasetManifest manifest;
  manifest.directory = o.out;
  for (std::size_t i = 0; i < patches.size(); ++i) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "patch_%04zu", i);
    ManifestEntry e{std::string(stem) + ".aqr", "", role, parse_split(o.split)};
    write_raster(patches[i].image, std::filesystem::path(o.out) / e.image_path);
    if (patches[i].mask) {
      e.mask_path = std::string(stem) + "_mask.aqr";
      write_raster(patches[i].mask->to_raster(), std::filesystem::path(o.out) / e.mask_path);
    }
    manifest.entries.push_back(e);
  }
  write_manifest(manifest, std::filesystem::path(o.out) / "manifest.csv");
  std::printf("wrote %zu patches of %dx%d (stride %d) to %s\n", patches.size(), o.size, o.size, stride, o.out.c_str());
  return 0;
}

TrainConfig train_config(const TrainOptions& o) {
  auto c = TrainConfig::defaults(parse_mode(o.mode));
  if (o.epochs >= 0) c.epochs = o.epochs;
  c.batch_size = o.batch;
  c.batch_hr = o.batch_hr;
  c.batch_vhr = o.batch_vhr;
  c.batch_unlabelled = o.batch_unlabelled;
  c.adam.lr = o.lr;
  c.weights = {o.w1, o.w2, o.w3};
  c.bridge_factor = o.factor;
  c.preset = o.preset;
  c.seed = o.seed;
  c.threshold = o.threshold;
  c.checkpoint = o.ckpt;
  c.log = o.log;
  c.eval_every_epoch = o.eval_every_epoch;
  c.detach_vhr = o.detach_vhr;
  c.detach_hr = o.detach_hr;
  c.validate();
  return c;
}

int cmd_train(const TrainOptions& o) {
  auto config = train_config(o);
  std::printf("mode %s, %d epochs\n", std::string(to_string(config.mode)).c_str(), config.epochs);
  config.on_epoch = [](int epoch, double mean_total) { std::printf("epoch %d mean loss %.6f\n", epoch, mean_total); std::fflush(stdout); };
  const auto manifest = load_manifest(o.manifest);
  const auto result = train(config, manifest);
  std::printf("checkpoint (last) written to %s\n", o.ckpt.c_str());
  if (result.best_iou) std::printf("best validation IoU %.4f written to %s.best\n", *result.best_iou, o.ckpt.c_str());
  if (result.validation) {
    std::printf("final val IoU %.4f Dice %.4f over %zu samples (checkpoint: last)\n", result.validation->mean_iou,
                result.validation->mean_dice, result.validation->count());
  } else {
    std::printf("final val IoU n/a (empty val split)\n");
  }
  return 0;
}

int cmd_eval(const EvalOptions& o) {
  const auto ckpt = read_checkpoint(o.ckpt);
  const auto manifest = load_manifest(o.manifest);
  const auto report = evaluate(ckpt, manifest, parse_split(o.split), o.threshold);
  const auto samples = ckpt.find_meta("train.samples").value_or("0");
  const auto label = ckpt.find_meta("model").value_or("unet") + "(" + ckpt.find_meta("selection").value_or("last") + ")";
  const std::string text = metrics_csv_header() + "\n" +
                           metrics_csv_row(static_cast<std::size_t>(std::stoull(samples)), label, report) + "\n";
  std::cout << text;
  std::printf("evaluated %zu %s samples\n", report.count(), o.split.c_str());
  if (!o.csv.empty()) {
    std::ofstream f(o.csv);
    if (!(f << text)) throw IoError("cannot write '" + o.csv + "'");
  }
  return 0;
}

int cmd_ablate(const AblateOptions& o) {
  const auto manifest = load_manifest(o.manifest);
  auto base = [&](TrainMode mode, int epochs) {
    auto c = TrainConfig::defaults(mode);
    c.epochs = epochs;
    c.batch_size = o.batch;
    c.batch_hr = o.batch_hr;
    c.batch_vhr = o.batch_vhr;
    c.batch_unlabelled = o.batch_unlabelled;
    c.adam.lr = o.lr;
    c.weights = {o.w1, o.w2, o.w3};
    c.bridge_factor = o.factor;
    c.preset = o.preset;
    c.seed = o.seed;
    c.threshold = o.threshold;
    c.validate();
    return c;
  };
  const auto table = ablate_training_size(o.sizes, base(TrainMode::unet_vhr, o.unet_epochs),
                                          base(TrainMode::combined, o.combined_epochs), manifest,
                                          parse_split(o.split), [](const AblationRow& r) {
                                            std::printf("size %zu done: unet IoU %.4f, combined IoU %.4f\n", r.size,
                                                        r.unet.mean_iou, r.combined.mean_iou);
                                            std::fflush(stdout);
                                          });
  std::cout << table.text();
  if (!o.csv.empty()) {
    std::ofstream f(o.csv);
    if (!(f << table.csv())) throw IoError("cannot write '" + o.csv + "'");
  }
  return 0;
}

std::vector<double> parse_doubles(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
  return out;
}

int cmd_predict(const PredictOptions& o) {
  const auto ckpt = read_checkpoint(o.ckpt);
  BandStats stats;
  if (!o.manifest.empty()) {
    stats = require_band_stats(load_manifest(o.manifest));
  } else {
    const auto mean = ckpt.find_meta("norm.mean");
    const auto std = ckpt.find_meta("norm.std");
    if (!mean || !std) throw ConfigError("checkpoint carries no normalization statistics; pass --manifest");
    stats.mean = parse_doubles(*mean);
    stats.std = parse_doubles(*std);
  }
  const auto model = inference_model(ckpt);
  const auto image = read_raster(o.image);
  if (image.bands != model.config().in_channels) {
    throw ShapeError("checkpoint expects " + std::to_string(model.config().in_channels) + " bands, image has " +
                     std::to_string(image.bands));
  }
  std::vector<RasterImage> batch{image};
  NoGradGuard no_grad;
  const auto logits = model.forward(normalize(batch, stats));
  MaskImage mask{image.width, image.height, threshold_logits(logits.data(), o.threshold)};
  write_raster(mask.to_raster(), o.out);
  auto pgm = o.pgm.empty() ? std::filesystem::path(o.out).replace_extension(".pgm") : std::filesystem::path(o.pgm);
  write_pgm(mask.to_raster(), pgm, true);
  const auto water = std::count(mask.values.begin(), mask.values.end(), 1);
  std::printf("predicted %dx%d mask, %.2f%% water -> %s, %s\n", mask.width, mask.height,
              100.0 * static_cast<double>(water) / static_cast<double>(mask.values.size()), o.out.c_str(),
              pgm.string().c_str());
  return 0;
}

void add_train_knobs(CLI::App* sub, int& batch, int& batch_hr, int& batch_vhr, int& batch_unl, double& lr, double& w1,
                     double& w2, double& w3, int& factor, std::string& preset, std::uint64_t& seed, double& threshold) {
  sub->add_option("--batch", batch, "Batch size of the single U-Net modes")->check(CLI::PositiveNumber);
  sub->add_option("--batch-hr", batch_hr, "Combined mode: HR batch size")->check(CLI::PositiveNumber);
  sub->add_option("--batch-vhr", batch_vhr, "Combined mode: labelled VHR batch size")->check(CLI::PositiveNumber);
  sub->add_option("--batch-unlabelled", batch_unl, "Combined mode: unlabelled VHR batch size (0 disables L3)")
      ->check(CLI::NonNegativeNumber);
  sub->add_option("--lr", lr, "Adam learning rate")->check(CLI::PositiveNumber);
  sub->add_option("--w1", w1, "Weight of the labelled VHR loss")->check(CLI::NonNegativeNumber);
  sub->add_option("--w2", w2, "Weight of the HR loss")->check(CLI::NonNegativeNumber);
  sub->add_option("--w3", w3, "Weight of the consistency loss")->check(CLI::NonNegativeNumber);
  sub->add_option("--factor", factor, "VHR to HR bridge factor")->check(CLI::Range(2, 64));
  sub->add_option("--preset", preset, "U-Net preset")->check(CLI::IsMember(kPresets));
  sub->add_option("--seed", seed, "Seed for initialization and batch order");
  sub->add_option("--threshold", threshold, "Probability threshold for masks")->check(CLI::Range(0.0, 1.0));
}

int dispatch(const std::vector<std::string>& args_in) {
  CLI::App app{"Water-body segmentation: U-Net baseline and two-resolution combined model"};
  app.name("aquaseg");
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  SynthOptions so;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic two-resolution dataset");
  synth->add_option("--out", so.out, "Output directory")->required();
  synth->add_option("--scenes", so.scenes, "Scene counts HR,VHR_LABELLED,VHR_UNLABELLED or a total N");
  synth->add_option("--vhr-size", so.vhr_size, "VHR scene size in pixels")->check(CLI::PositiveNumber);
  synth->add_option("--factor", so.factor, "VHR to HR downsampling factor")->check(CLI::PositiveNumber);
  synth->add_option("--shift", so.shift, "HR distribution shift")->check(CLI::IsMember(kShifts));
  synth->add_option("--gain", so.gain, "Radiometric shift gain");
  synth->add_option("--offset", so.offset, "Radiometric shift offset");
  synth->add_option("--texture-sigma", so.texture_sigma, "Texture shift noise sigma")->check(CLI::NonNegativeNumber);
  synth->add_option("--noise", so.noise, "Background noise amplitude")->check(CLI::NonNegativeNumber);
  synth->add_option("--seed", so.seed, "Generator seed");

  PatchifyOptions po;
  auto* patch = app.add_subcommand("patchify", "Tile a raster (and mask) into fixed-size patches");
  patch->add_option("--image", po.image, "Input AQR raster")->required();
  patch->add_option("--mask", po.mask, "Input AQR mask");
  patch->add_option("--out", po.out, "Output directory")->required();
  patch->add_option("--size", po.size, "Patch size")->check(CLI::PositiveNumber);
  patch->add_option("--stride", po.stride, "Stride (0 = patch size)")->check(CLI::NonNegativeNumber);
  patch->add_option("--role", po.role, "Manifest role of the patches")->check(CLI::IsMember(kRoles));
  patch->add_option("--split", po.split, "Manifest split of the patches")->check(CLI::IsMember(kSplits));

  TrainOptions to;
  auto* trn = app.add_subcommand("train", "Train a U-Net or the combined model");
  trn->add_option("--mode", to.mode, "unet (= unet_vhr), unet_hr or combined")->check(CLI::IsMember(kModes));
  trn->add_option("--manifest", to.manifest, "Dataset manifest CSV")->required();
  trn->add_option("--epochs", to.epochs, "Epochs")->default_str("25 (unet modes), 40 (combined)");
  trn->add_option("--ckpt", to.ckpt, "Checkpoint output path")->required();
  trn->add_option("--log", to.log, "Loss log CSV (default <ckpt>.log.csv)");
  trn->add_flag("--eval-every-epoch", to.eval_every_epoch, "Validate each epoch and keep <ckpt>.best");
  trn->add_flag("--detach-vhr", to.detach_vhr, "Stop consistency gradients into unet1");
  trn->add_flag("--detach-hr", to.detach_hr, "Stop consistency gradients into unet2");
  add_train_knobs(trn, to.batch, to.batch_hr, to.batch_vhr, to.batch_unlabelled, to.lr, to.w1, to.w2, to.w3,
                  to.factor, to.preset, to.seed, to.threshold);

  EvalOptions eo;
  auto* ev = app.add_subcommand("eval", "Score a checkpoint on a split");
  ev->add_option("--ckpt", eo.ckpt, "Checkpoint")->required();
  ev->add_option("--manifest", eo.manifest, "Dataset manifest CSV")->required();
  ev->add_option("--split", eo.split, "Split to score")->check(CLI::IsMember(kSplits));
  ev->add_option("--threshold", eo.threshold, "Probability threshold")->check(CLI::Range(0.0, 1.0));
  ev->add_option("--csv", eo.csv, "Also write the row to this CSV");

  AblateOptions ao;
  auto* abl = app.add_subcommand("ablate", "Training-size sweep: baseline vs combined");
  abl->add_option("--manifest", ao.manifest, "Dataset manifest CSV")->required();
  abl->add_option("--sizes", ao.sizes, "Labelled VHR training sizes")->delimiter(',')->required();
  abl->add_option("--unet-epochs", ao.unet_epochs, "Baseline epochs")->check(CLI::NonNegativeNumber);
  abl->add_option("--combined-epochs", ao.combined_epochs, "Combined-model epochs")->check(CLI::NonNegativeNumber);
  abl->add_option("--split", ao.split, "Evaluation split")->check(CLI::IsMember(kSplits));
  abl->add_option("--csv", ao.csv, "Also write the table as CSV");
  add_train_knobs(abl, ao.batch, ao.batch_hr, ao.batch_vhr, ao.batch_unlabelled, ao.lr, ao.w1, ao.w2, ao.w3,
                  ao.factor, ao.preset, ao.seed, ao.threshold);

  PredictOptions pr;
  auto* pred = app.add_subcommand("predict", "Predict a water mask for one raster");
  pred->add_option("--ckpt", pr.ckpt, "Checkpoint")->required();
  pred->add_option("--image", pr.image, "Input AQR raster")->required();
  pred->add_option("--out", pr.out, "Output mask (AQR)")->required();
  pred->add_option("--pgm", pr.pgm, "PGM preview (default: --out with .pgm)");
  pred->add_option("--manifest", pr.manifest, "Take band statistics from this dataset instead of the checkpoint");
  pred->add_option("--threshold", pr.threshold, "Probability threshold")->check(CLI::Range(0.0, 1.0));

  std::vector<std::string> args(args_in.rbegin(), args_in.rend());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    for (auto* sub : app.get_subcommands()) print_resolved(*sub);
    if (synth->parsed()) return cmd_synth(so);
    if (patch->parsed()) return cmd_patchify(po);
    if (trn->parsed()) return cmd_train(to);
    if (ev->parsed()) return cmd_eval(eo);
    if (abl->parsed()) return cmd_ablate(ao);
    if (pred->parsed()) return cmd_predict(pr);
  } catch (const std::exception& e) {
    std::fflush(stdout);
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) { return dispatch(args); }

int run_cli(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return dispatch(args);
}

}  // namespace aquaseg
