#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "aquaseg/tensor.hpp"

namespace aquaseg {

inline constexpr double kDiceSmoothing = 1.0;
inline constexpr double kDefaultThreshold = 0.5;

/// Weights of the two training-loss terms; equal weighting by default.
struct LossWeights {
  double bce = 0.5;
  double dice = 0.5;
};

/// Scalar graph node plus the component values it was built from.
template <typename T>
struct LossValue {
  Tensor<T> total;
  double bce = 0.0;
  double dice = 0.0;
};

// Probability-space building blocks. Both arguments may carry gradients
// (the consistency loss uses a soft, differentiable target).

/// mean(-[t log p + (1 - t) log(1 - p)]); p is clamped to [1e-7, 1 - 1e-7] inside the logs.
template <typename T>
Tensor<T> binary_cross_entropy(const Tensor<T>& probs, const Tensor<T>& target);

/// 1 - (2 sum(p t) + eps) / (sum(p) + sum(t) + eps), sums over the whole batch.
template <typename T>
Tensor<T> soft_dice(const Tensor<T>& probs, const Tensor<T>& target, double smoothing = kDiceSmoothing);

/// 1 - (2 sum(p q) + eps) / (sum(p^2) + sum(q^2) + eps). Exactly zero when p == q.
template <typename T>
Tensor<T> soft_dice_squared(const Tensor<T>& p, const Tensor<T>& q, double smoothing = kDiceSmoothing);

// Logit-space training losses. Targets must be exactly 0 or 1.

template <typename T>
Tensor<T> bce_loss(const Tensor<T>& logits, const Tensor<T>& target);

template <typename T>
Tensor<T> dice_loss(const Tensor<T>& logits, const Tensor<T>& target, double smoothing = kDiceSmoothing);

/// weights.bce * bce + weights.dice * dice, evaluated in T in that order.
template <typename T>
LossValue<T> combine_losses(const Tensor<T>& bce, const Tensor<T>& dice, const LossWeights& weights = {});

template <typename T>
LossValue<T> combined_loss(const Tensor<T>& logits, const Tensor<T>& target, const LossWeights& weights = {},
                           double smoothing = kDiceSmoothing);

// ---- evaluation metrics (binary masks, values 0/1) ----

/// |P ∩ G| / |P ∪ G|; 1.0 when both masks are empty.
double iou_metric(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> target);
/// 2|P ∩ G| / (|P| + |G|); 1.0 when both masks are empty.
double dice_metric(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> target);

/// 1 where sigmoid(logit) > threshold.
std::vector<std::uint8_t> threshold_logits(std::span<const float> logits, double threshold = kDefaultThreshold);

struct MetricsReport {
  std::vector<double> iou;
  std::vector<double> dice;
  double mean_iou = 0.0;
  double mean_dice = 0.0;

  std::size_t count() const { return iou.size(); }
  void add_sample(double sample_iou, double sample_dice);
  /// Recomputes the means from the per-sample lists in index order.
  void finalize();
};

/// Table-1 shaped long form: "training_samples,model,IoU,Dice".
std::string metrics_csv_header();
std::string metrics_csv_row(std::size_t training_samples, const std::string& model, const MetricsReport& report);

}  // namespace aquaseg
