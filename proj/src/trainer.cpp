#include "aquaseg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "aquaseg/errors.hpp"
#include "aquaseg/ops.hpp"

namespace aquaseg {

std::string_view to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::unet_vhr:
      return "unet_vhr";
    case TrainMode::unet_hr:
      return "unet_hr";
    case TrainMode::combined:
      return "combined";
  }
  return "?";
}

TrainMode parse_mode(std::string_view text) {
  if (text == "unet" || text == "unet_vhr") return TrainMode::unet_vhr;
  if (text == "unet_hr") return TrainMode::unet_hr;
  if (text == "combined") return TrainMode::combined;
  throw ConfigError("unknown mode '" + std::string(text) + "' (expected unet, unet_vhr, unet_hr or combined)");
}

TrainConfig TrainConfig::defaults(TrainMode mode) {
  TrainConfig c;
  c.mode = mode;
  c.epochs = mode == TrainMode::combined ? 40 : 25;
  return c;
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 1 || batch_hr < 1 || batch_vhr < 1) throw ConfigError("batch sizes must be >= 1");
  if (batch_unlabelled < 0) throw ConfigError("unlabelled batch size must be >= 0");
  if (!(adam.lr > 0.0) || !std::isfinite(adam.lr)) throw ConfigError("learning rate must be positive");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must lie in (0, 1)");
  CombinedConfig combined;
  combined.bridge_factor = bridge_factor;
  combined.weights = weights;
  combined.validate();
}

namespace {

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

std::string join_doubles(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + fmt("%.17g", v[i]);
  return out;
}

}  // namespace

std::string TrainLog::csv() const {
  std::string out = "epoch,step,l1,l2,l3,total\n";
  char buf[160];
  for (const auto& s : steps) {
    std::snprintf(buf, sizeof buf, "%d,%llu,%.9g,%.9g,%.9g,%.9g\n", s.epoch, static_cast<unsigned long long>(s.step),
                  static_cast<double>(s.l1), static_cast<double>(s.l2), static_cast<double>(s.l3),
                  static_cast<double>(s.total));
    out += buf;
  }
  return out;
}

std::string TrainLog::validation_csv() const {
  std::string out = "epoch,samples,IoU,Dice\n";
  char buf[128];
  for (const auto& e : epochs) {
    std::snprintf(buf, sizeof buf, "%d,%zu,%.6f,%.6f\n", e.epoch, e.validation.count(), e.validation.mean_iou,
                  e.validation.mean_dice);
    out += buf;
  }
  return out;
}

std::vector<double> TrainLog::epoch_mean_totals() const {
  std::vector<double> out;
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    acc += steps[i].total;
    ++n;
    if (i + 1 == steps.size() || steps[i + 1].epoch != steps[i].epoch) {
      out.push_back(acc / static_cast<double>(n));
      acc = 0.0;
      n = 0;
    }
  }
  return out;
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f << text;
  if (!f) throw IoError("failed writing '" + path.string() + "'");
}

std::vector<std::size_t> train_entries(const DatasetManifest& manifest, Role role, const TrainConfig& config) {
  auto idx = role == Role::vhr_labelled && config.vhr_subset ? *config.vhr_subset : manifest.indices(role, Split::train);
  if (idx.empty()) {
    throw ConfigError("manifest has no " + std::string(to_string(role)) + " entries in the train split");
  }
  return idx;
}

void add_common_meta(Checkpoint& ckpt, const TrainConfig& config, const BandStats& stats, std::size_t samples,
                     std::uint64_t steps, const std::string& selection) {
  ckpt.set_meta("train.mode", std::string(to_string(config.mode)));
  ckpt.set_meta("train.samples", std::to_string(samples));
  ckpt.set_meta("train.seed", std::to_string(config.seed));
  ckpt.set_meta("train.epochs", std::to_string(config.epochs));
  ckpt.set_meta("train.steps", std::to_string(steps));
  ckpt.set_meta("selection", selection);
  ckpt.set_meta("norm.mean", join_doubles(stats.mean));
  ckpt.set_meta("norm.std", join_doubles(stats.std));
}

Checkpoint unet_checkpoint(const UNetModel<float>& model, Role role, const TrainConfig& config, const BandStats& stats,
                           std::size_t samples, std::uint64_t steps, const std::string& selection) {
  Checkpoint ckpt;
  ckpt.set_meta("model", "unet");
  ckpt.set_meta("role", std::string(to_string(role)));
  add_common_meta(ckpt, config, stats, samples, steps, selection);
  append_unet(ckpt, model);
  return ckpt;
}

Checkpoint combined_checkpoint_with_meta(const CombinedModel<float>& model, const TrainConfig& config,
                                         const BandStats& stats, std::size_t samples, std::uint64_t steps,
                                         const std::string& selection) {
  Checkpoint ckpt = combined_checkpoint(model);
  add_common_meta(ckpt, config, stats, samples, steps, selection);
  return ckpt;
}

std::filesystem::path sibling(const std::filesystem::path& p, const std::string& suffix) {
  return std::filesystem::path(p.string() + suffix);
}

// Shared epoch bookkeeping: per-epoch validation, best-IoU checkpointing and
// final outputs.
struct RunOutputs {
  const TrainConfig& config;
  const DatasetManifest& manifest;
  const BandStats& stats;
  TrainResult result;

  void end_epoch(int epoch, const UNetModel<float>& eval_net, Role role,
                 const std::function<Checkpoint(const std::string&)>& snapshot) {
    if (config.on_epoch) {
      const auto totals = result.log.epoch_mean_totals();
      config.on_epoch(epoch, totals.empty() ? 0.0 : totals.back());
    }
    if (!config.eval_every_epoch || manifest.indices(role, Split::val).empty()) return;
    auto report = evaluate_model(eval_net, manifest, role, Split::val, stats, config.threshold);
    if (!result.best_iou || report.mean_iou > *result.best_iou) {
      result.best_iou = report.mean_iou;
      if (!config.checkpoint.empty()) {
        auto ckpt = snapshot("best");
        ckpt.set_meta("best.epoch", std::to_string(epoch));
        write_checkpoint(ckpt, sibling(config.checkpoint, ".best"));
      }
    }
    result.log.epochs.push_back({epoch, std::move(report)});
  }

  TrainResult finish(const UNetModel<float>& eval_net, Role role, Checkpoint last) {
    result.checkpoint = std::move(last);
    if (!manifest.indices(role, Split::val).empty()) {
      result.validation = evaluate_model(eval_net, manifest, role, Split::val, stats, config.threshold);
    }
    if (!config.checkpoint.empty()) {
      write_checkpoint(result.checkpoint, config.checkpoint);
      const auto log_path = config.log.empty() ? sibling(config.checkpoint, ".log.csv") : config.log;
      write_text(log_path, result.log.csv());
      if (config.eval_every_epoch) write_text(sibling(config.checkpoint, ".val.csv"), result.log.validation_csv());
    } else if (!config.log.empty()) {
      write_text(config.log, result.log.csv());
    }
    return std::move(result);
  }
};

}  // namespace

TrainResult train_unet(const TrainConfig& config, const DatasetManifest& manifest) {
  config.validate();
  if (config.mode == TrainMode::combined) throw ConfigError("train_unet called with combined mode");
  manifest.validate();
  const Role role = config.mode == TrainMode::unet_hr ? Role::hr_labelled : Role::vhr_labelled;
  const auto entries = train_entries(manifest, role, config);
  const BandStats stats = ensure_band_stats(manifest);
  SampleStore store(manifest, stats);

  const bool vhr = role == Role::vhr_labelled;
  Prng init = Prng::derive(config.seed, vhr ? stream::init_vhr_net : stream::init_hr_net);
  UNetModel<float> model(UNetConfig::from_preset(config.preset, store.bands()), init);
  BatchSampler sampler(entries, static_cast<std::size_t>(config.batch_size),
                       Prng::derive(config.seed, vhr ? stream::batches_vhr_labelled : stream::batches_hr));
  OptimizerState opt;
  opt.config = config.adam;
  std::span<NamedParameter<float>> params(model.parameters());

  RunOutputs out{config, manifest, stats, {}};
  std::uint64_t step = 0;
  auto snapshot = [&](const std::string& selection) {
    return unet_checkpoint(model, role, config, stats, entries.size(), step, selection);
  };
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t b = 0; b < sampler.batches_per_epoch(); ++b) {
      const auto batch = sampler.next();
      const auto x = store.images(batch);
      const auto y = store.masks(batch);
      model.zero_grad();
      const auto loss = combined_loss(model.forward(x), y);
      backward(loss.total);
      adam_step(params, opt);
      const float value = loss.total.item();
      StepRecord rec{epoch, ++step};
      (vhr ? rec.l1 : rec.l2) = value;
      rec.total = value;
      out.result.log.steps.push_back(rec);
    }
    out.end_epoch(epoch, model, role, snapshot);
  }
  return out.finish(model, role, snapshot("last"));
}

TrainResult train_combined(const TrainConfig& config, const DatasetManifest& manifest) {
  config.validate();
  manifest.validate();
  const auto hr_entries = train_entries(manifest, Role::hr_labelled, config);
  const auto vhr_entries = train_entries(manifest, Role::vhr_labelled, config);
  const bool use_unlabelled = config.batch_unlabelled > 0;
  const auto unl_entries =
      use_unlabelled ? train_entries(manifest, Role::vhr_unlabelled, config) : std::vector<std::size_t>{};
  const BandStats stats = ensure_band_stats(manifest);
  SampleStore store(manifest, stats);

  const auto net_config = UNetConfig::from_preset(config.preset, store.bands());
  Prng init1 = Prng::derive(config.seed, stream::init_vhr_net);
  Prng init2 = Prng::derive(config.seed, stream::init_hr_net);
  CombinedConfig cc;
  cc.bridge_factor = config.bridge_factor;
  cc.weights = config.weights;
  cc.detach_vhr = config.detach_vhr;
  cc.detach_hr = config.detach_hr;
  CombinedModel<float> model(UNetModel<float>(net_config, init1), UNetModel<float>(net_config, init2), cc);

  BatchSampler hr_sampler(hr_entries, static_cast<std::size_t>(config.batch_hr),
                          Prng::derive(config.seed, stream::batches_hr));
  BatchSampler vhr_sampler(vhr_entries, static_cast<std::size_t>(config.batch_vhr),
                           Prng::derive(config.seed, stream::batches_vhr_labelled));
  std::optional<BatchSampler> unl_sampler;
  if (use_unlabelled) {
    unl_sampler.emplace(unl_entries, static_cast<std::size_t>(config.batch_unlabelled),
                        Prng::derive(config.seed, stream::batches_vhr_unlabelled));
  }
  OptimizerState opt;
  opt.config = config.adam;
  auto params = model.all_parameters();

  RunOutputs out{config, manifest, stats, {}};
  std::uint64_t step = 0;
  auto snapshot = [&](const std::string& selection) {
    return combined_checkpoint_with_meta(model, config, stats, vhr_entries.size(), step, selection);
  };
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t b = 0; b < hr_sampler.batches_per_epoch(); ++b) {
      const auto hr = hr_sampler.next();
      const auto vhr = vhr_sampler.next();
      TriBatch<float> batch{store.images(hr), store.masks(hr), store.images(vhr), store.masks(vhr), {}};
      if (unl_sampler) batch.vhr_unlabelled = store.images(unl_sampler->next());
      model.zero_grad();
      const auto report = combined_forward(model, batch);
      backward(report.total_node);
      adam_step(std::span<NamedParameter<float>>(params), opt);
      out.result.log.steps.push_back({epoch, ++step, static_cast<float>(report.l1), static_cast<float>(report.l2),
                                      static_cast<float>(report.l3), static_cast<float>(report.total)});
    }
    out.end_epoch(epoch, model.unet1(), Role::vhr_labelled, snapshot);
  }
  return out.finish(model.unet1(), Role::vhr_labelled, snapshot("last"));
}

TrainResult train(const TrainConfig& config, const DatasetManifest& manifest) {
  return config.mode == TrainMode::combined ? train_combined(config, manifest) : train_unet(config, manifest);
}

MetricsReport evaluate_model(const UNetModel<float>& model, const DatasetManifest& manifest, Role role, Split split,
                             const BandStats& stats, double threshold, int batch_size) {
  const auto entries = manifest.indices(role, split);
  if (entries.empty()) {
    throw ConfigError("no " + std::string(to_string(role)) + " entries in the " + std::string(to_string(split)) +
                      " split");
  }
  if (static_cast<int>(stats.mean.size()) != model.config().in_channels) {
    throw ShapeError("model expects " + std::to_string(model.config().in_channels) + " bands but the dataset has " +
                     std::to_string(stats.mean.size()));
  }
  SampleStore store(manifest, stats);
  MetricsReport report;
  NoGradGuard no_grad;
  for (const auto& batch : evaluation_batches(entries, static_cast<std::size_t>(batch_size))) {
    const auto logits = model.forward(store.images(batch));
    const auto masks = store.masks(batch);
    const std::size_t plane = logits.shape().plane();
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto pred = threshold_logits(logits.data().subspan(i * plane, plane), threshold);
      std::vector<std::uint8_t> truth(plane);
      const auto m = masks.data().subspan(i * plane, plane);
      std::transform(m.begin(), m.end(), truth.begin(), [](float v) { return static_cast<std::uint8_t>(v); });
      report.add_sample(iou_metric(pred, truth), dice_metric(pred, truth));
    }
  }
  report.finalize();
  return report;
}

UNetModel<float> inference_model(const Checkpoint& checkpoint, Role* role) {
  const auto kind = checkpoint.find_meta("model").value_or("unet");
  if (kind == "combined") {
    if (role) *role = Role::vhr_labelled;
    return extract_combined(checkpoint).unet1();
  }
  if (role) *role = parse_role(checkpoint.find_meta("role").value_or("vhr_labelled"));
  return extract_unet(checkpoint);
}

MetricsReport evaluate(const Checkpoint& checkpoint, const DatasetManifest& manifest, Split split, double threshold) {
  const auto stats = require_band_stats(manifest);
  Role role{};
  const auto model = inference_model(checkpoint, &role);
  return evaluate_model(model, manifest, role, split, stats, threshold);
}

std::vector<std::size_t> ablation_subset(const DatasetManifest& manifest, std::size_t size, std::uint64_t seed) {
  auto pool = manifest.indices(Role::vhr_labelled, Split::train);
  if (size == 0 || size > pool.size()) {
    throw ConfigError("ablation size " + std::to_string(size) + " outside 1.." + std::to_string(pool.size()) +
                      " (labelled VHR train entries)");
  }
  Prng rng = Prng::derive(seed, stream::ablation_subset);
  rng.shuffle(pool.begin(), pool.end());
  pool.resize(size);
  std::sort(pool.begin(), pool.end());
  return pool;
}

std::string AblationTable::text() const {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%16s  %9s  %10s  %12s  %13s\n", "training_samples", "U-Net IoU", "U-Net Dice",
                "Combined IoU", "Combined Dice");
  os << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%16zu  %9.4f  %10.4f  %12.4f  %13.4f\n", r.size, r.unet.mean_iou, r.unet.mean_dice,
                  r.combined.mean_iou, r.combined.mean_dice);
    os << buf;
  }
  return os.str();
}

std::string AblationTable::csv() const {
  std::string out = "training_samples,unet_iou,unet_dice,combined_iou,combined_dice\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%.4f,%.4f,%.4f,%.4f\n", r.size, r.unet.mean_iou, r.unet.mean_dice,
                  r.combined.mean_iou, r.combined.mean_dice);
    out += buf;
  }
  return out;
}

AblationTable ablate_training_size(const std::vector<std::size_t>& sizes, const TrainConfig& unet_config,
                                   const TrainConfig& combined_config, const DatasetManifest& manifest,
                                   Split eval_split, const std::function<void(const AblationRow&)>& on_row) {
  if (sizes.empty()) throw ConfigError("ablation needs at least one training size");
  // Fail before any training when a size cannot be drawn.
  for (auto s : sizes) ablation_subset(manifest, s, unet_config.seed);
  const auto stats = ensure_band_stats(manifest);

  AblationTable table;
  for (auto size : sizes) {
    AblationRow row;
    row.size = size;
    const auto subset = ablation_subset(manifest, size, unet_config.seed);

    TrainConfig uc = unet_config;
    uc.mode = TrainMode::unet_vhr;
    uc.vhr_subset = subset;
    uc.checkpoint.clear();
    uc.log.clear();
    const auto baseline = train_unet(uc, manifest);
    row.unet = evaluate_model(inference_model(baseline.checkpoint), manifest, Role::vhr_labelled, eval_split, stats,
                              uc.threshold);

    TrainConfig cc = combined_config;
    cc.mode = TrainMode::combined;
    cc.vhr_subset = subset;
    cc.checkpoint.clear();
    cc.log.clear();
    const auto combined = train_combined(cc, manifest);
    row.combined = evaluate_model(inference_model(combined.checkpoint), manifest, Role::vhr_labelled, eval_split,
                                  stats, cc.threshold);
    if (on_row) on_row(row);
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace aquaseg
