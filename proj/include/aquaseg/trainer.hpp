#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "aquaseg/adam.hpp"
#include "aquaseg/checkpoint.hpp"
#include "aquaseg/combined.hpp"
#include "aquaseg/dataset.hpp"
#include "aquaseg/loss.hpp"

namespace aquaseg {

enum class TrainMode { unet_vhr, unet_hr, combined };

std::string_view to_string(TrainMode mode);
/// Accepts "unet" (alias of unet_vhr), "unet_vhr", "unet_hr" and "combined".
TrainMode parse_mode(std::string_view text);

struct TrainConfig {
  TrainMode mode = TrainMode::unet_vhr;
  int epochs = 25;
  int batch_size = 4;        // single U-Net modes
  int batch_hr = 4;          // combined mode streams
  int batch_vhr = 2;
  int batch_unlabelled = 1;  // 0 disables the consistency stream
  AdamConfig adam;
  CombinedWeights weights;
  int bridge_factor = 4;
  bool detach_vhr = false;
  bool detach_hr = false;
  std::string preset = "micro";
  std::uint64_t seed = 0;
  double threshold = kDefaultThreshold;
  std::filesystem::path checkpoint;  // nothing written when empty
  std::filesystem::path log;         // defaults to <checkpoint>.log.csv
  bool eval_every_epoch = false;
  /// Restricts the labelled VHR train entries (ablation); manifest indices.
  std::optional<std::vector<std::size_t>> vhr_subset;
  /// Called with each completed epoch's mean total loss.
  std::function<void(int epoch, double mean_total)> on_epoch;

  /// 25 epochs / batch 4 for the single U-Net modes; 40 epochs / 4,2,1 for combined.
  static TrainConfig defaults(TrainMode mode);
  void validate() const;
};

struct StepRecord {
  int epoch = 0;
  std::uint64_t step = 0;
  float l1 = 0, l2 = 0, l3 = 0, total = 0;
};

struct EpochRecord {
  int epoch = 0;
  MetricsReport validation;
};

/// Single U-Net modes log their loss as l1 (VHR) or l2 (HR); unused columns stay 0.
struct TrainLog {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;

  std::string csv() const;             // epoch,step,l1,l2,l3,total
  std::string validation_csv() const;  // epoch,samples,IoU,Dice
  /// Mean total loss of every epoch, in order.
  std::vector<double> epoch_mean_totals() const;
};

struct TrainResult {
  Checkpoint checkpoint;  // final ("last") parameters
  TrainLog log;
  std::optional<MetricsReport> validation;  // final model on the val split, when nonempty
  std::optional<double> best_iou;           // with eval_every_epoch
};

TrainResult train_unet(const TrainConfig& config, const DatasetManifest& manifest);
TrainResult train_combined(const TrainConfig& config, const DatasetManifest& manifest);
TrainResult train(const TrainConfig& config, const DatasetManifest& manifest);

/// Thresholded per-sample IoU/Dice of a loaded network over role/split.
MetricsReport evaluate_model(const UNetModel<float>& model, const DatasetManifest& manifest, Role role, Split split,
                             const BandStats& stats, double threshold = kDefaultThreshold, int batch_size = 4);
/// Combined checkpoints are evaluated through unet1 on VHR data; single
/// checkpoints on the role they were trained for. Needs band_stats.txt.
MetricsReport evaluate(const Checkpoint& checkpoint, const DatasetManifest& manifest, Split split,
                       double threshold = kDefaultThreshold);

/// The network a checkpoint predicts with, and the role it applies to.
UNetModel<float> inference_model(const Checkpoint& checkpoint, Role* role = nullptr);

/// First `size` entries of a seeded permutation of the VHR-labelled train
/// split, returned in manifest order. Subsets for one seed are nested.
std::vector<std::size_t> ablation_subset(const DatasetManifest& manifest, std::size_t size, std::uint64_t seed);

struct AblationRow {
  std::size_t size = 0;
  MetricsReport unet;
  MetricsReport combined;
};

struct AblationTable {
  std::vector<AblationRow> rows;

  /// Rows = sizes; columns = U-Net IoU, U-Net Dice, Combined IoU, Combined Dice.
  std::string text() const;
  std::string csv() const;
};

/// Trains the VHR baseline and the combined model for every size and scores both on `eval_split`.
AblationTable ablate_training_size(const std::vector<std::size_t>& sizes, const TrainConfig& unet_config,
                                   const TrainConfig& combined_config, const DatasetManifest& manifest,
                                   Split eval_split = Split::test,
                                   const std::function<void(const AblationRow&)>& on_row = {});

}  // namespace aquaseg
