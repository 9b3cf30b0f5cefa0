#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "aquaseg/checkpoint.hpp"
#include "aquaseg/loss.hpp"
#include "aquaseg/nn.hpp"

namespace aquaseg {

struct CombinedWeights {
  double w1 = 1.0;  // labelled VHR, unet1
  double w2 = 1.0;  // labelled HR, unet2
  double w3 = 0.1;  // cross-resolution consistency on unlabelled VHR
};

struct CombinedConfig {
  int bridge_factor = 4;
  CombinedWeights weights;
  bool detach_vhr = false;  // stop gradients into unet1 through the consistency term
  bool detach_hr = false;   // same for unet2
  LossWeights loss_weights;
  double smoothing = kDiceSmoothing;

  void validate() const;
};

template <typename T>
class CombinedModel {
 public:
  CombinedModel(UNetModel<T> unet1, UNetModel<T> unet2, CombinedConfig config);

  UNetModel<T>& unet1() noexcept { return unet1_; }
  UNetModel<T>& unet2() noexcept { return unet2_; }
  const UNetModel<T>& unet1() const noexcept { return unet1_; }
  const UNetModel<T>& unet2() const noexcept { return unet2_; }
  const CombinedConfig& config() const noexcept { return config_; }
  CombinedConfig& config() noexcept { return config_; }

  /// unet1 parameters then unet2 parameters, named "unet1/..." and "unet2/...".
  /// The tensors share storage with the networks.
  std::vector<NamedParameter<T>> all_parameters() const;
  void zero_grad();

 private:
  UNetModel<T> unet1_;
  UNetModel<T> unet2_;
  CombinedConfig config_;
};

/// One step's worth of the three input streams. `vhr_unlabelled` may be left
/// undefined, in which case the consistency term is not built.
template <typename T>
struct TriBatch {
  Tensor<T> hr_images;
  Tensor<T> hr_masks;
  Tensor<T> vhr_images;
  Tensor<T> vhr_masks;
  Tensor<T> vhr_unlabelled;
};

template <typename T>
struct CombinedLossReport {
  double l1 = 0.0;
  double l2 = 0.0;
  double l3 = 0.0;
  double total = 0.0;
  double l3_bce = 0.0;
  double l3_dice = 0.0;
  bool has_l3 = false;
  Tensor<T> l1_node;
  Tensor<T> l2_node;
  Tensor<T> l3_node;  // undefined without an unlabelled stream
  Tensor<T> total_node;
};

template <typename T>
Tensor<T> bridge_down(const Tensor<T>& vhr, int factor);
template <typename T>
Tensor<T> bridge_up(const Tensor<T>& hr_logits, int factor);

template <typename T>
struct ConsistencyValue {
  Tensor<T> total;
  Tensor<T> bce;
  Tensor<T> dice;
};

/// BCE of p_a against the soft target p_b plus squared-denominator soft Dice
/// between them, combined with `weights`.
template <typename T>
ConsistencyValue<T> consistency_loss(const Tensor<T>& p_a, const Tensor<T>& p_b, const LossWeights& weights = {},
                                     double smoothing = kDiceSmoothing);

/// total = (w1 * l1 + w2 * l2) + w3 * l3, evaluated in T in that order.
template <typename T>
CombinedLossReport<T> combined_forward(const CombinedModel<T>& model, const TriBatch<T>& batch);

/// Both networks in one AQCK file under groups "unet1" and "unet2".
Checkpoint combined_checkpoint(const CombinedModel<float>& model);
CombinedModel<float> extract_combined(const Checkpoint& ckpt);

extern template class CombinedModel<float>;
extern template class CombinedModel<double>;

}  // namespace aquaseg
