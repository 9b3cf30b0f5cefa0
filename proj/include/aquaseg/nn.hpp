#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "aquaseg/random.hpp"
#include "aquaseg/tensor.hpp"

namespace aquaseg {

/// Architecture of a U-Net whose encoder follows the VGG11 stacking pattern.
///
/// Stage i of the encoder applies `encoder_block_convs[i]` 3x3 convolutions
/// with `encoder_channels[i]` filters, then a 2x2 max pool. A 3x3 center
/// convolution runs at the lowest resolution. Decoder stage i upsamples with
/// a stride-2 transposed convolution, concatenates encoder stage i features
/// and fuses them with a 3x3 convolution. A 1x1 head emits one logit channel.
struct UNetConfig {
  std::string preset = "micro";
  int in_channels = 4;
  int depth = 3;
  std::vector<int> encoder_block_convs{1, 1, 1};
  std::vector<int> encoder_channels{8, 16, 32};

  /// "micro" (test scale) or "ternaus11-lite" (width-reduced VGG11 layout).
  static UNetConfig from_preset(std::string_view name, int in_channels = 4);

  void validate() const;
  /// Spatial dims of every input must be a multiple of this.
  int divisor() const { return 1 << depth; }
};

struct ParamSpec {
  std::string name;
  Shape4 shape;
  int fan_in = 0;  // 0 for biases (zero-initialized)
};

/// Names, shapes and fan-ins of all parameters in registration order.
std::vector<ParamSpec> unet_parameter_layout(const UNetConfig& config);

template <typename T>
struct NamedParameter {
  std::string name;
  Tensor<T> tensor;
};

template <typename T>
class UNetModel {
 public:
  /// Weights He-uniform over fan-in, U(-sqrt(6/fan_in), sqrt(6/fan_in)); biases zero.
  UNetModel(UNetConfig config, Prng& rng);
  /// Adopts existing parameter values; shapes are validated against the layout.
  UNetModel(UNetConfig config, std::vector<NamedParameter<T>> parameters);

  const UNetConfig& config() const noexcept { return config_; }
  const std::vector<NamedParameter<T>>& parameters() const noexcept { return params_; }
  std::vector<NamedParameter<T>>& parameters() noexcept { return params_; }
  std::size_t parameter_count() const;

  const Tensor<T>& parameter(std::string_view name) const;

  /// Logits of shape (n, 1, h, w). No sigmoid is applied.
  Tensor<T> forward(const Tensor<T>& batch) const;

  void zero_grad();

 private:
  UNetConfig config_;
  std::vector<NamedParameter<T>> params_;
};

template <typename T>
UNetModel<T> build_unet(const UNetConfig& config, Prng& rng) {
  return UNetModel<T>(config, rng);
}

template <typename T>
Tensor<T> unet_forward(const UNetModel<T>& model, const Tensor<T>& batch) {
  return model.forward(batch);
}

extern template class UNetModel<float>;
extern template class UNetModel<double>;

}  // namespace aquaseg
