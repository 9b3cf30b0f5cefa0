#include "aquaseg/nn.hpp"

#include <cmath>

#include "aquaseg/errors.hpp"
#include "aquaseg/ops.hpp"

namespace aquaseg {

UNetConfig UNetConfig::from_preset(std::string_view name, int in_channels) {
  UNetConfig c;
  c.in_channels = in_channels;
  if (name == "micro") {
    c.preset = "micro";
    c.depth = 3;
    c.encoder_block_convs = {1, 1, 1};
    c.encoder_channels = {8, 16, 32};
  } else if (name == "ternaus11-lite") {
    c.preset = "ternaus11-lite";
    c.depth = 5;
    c.encoder_block_convs = {1, 1, 2, 2, 2};
    c.encoder_channels = {32, 64, 128, 256, 256};
  } else {
    throw ConfigError("unknown U-Net preset '" + std::string(name) + "' (expected micro or ternaus11-lite)");
  }
  return c;
}

void UNetConfig::validate() const {
  if (in_channels < 1) throw ConfigError("in_channels must be >= 1");
  if (depth < 1 || depth > 12) throw ConfigError("depth must be in [1, 12], got " + std::to_string(depth));
  if (static_cast<int>(encoder_channels.size()) != depth || static_cast<int>(encoder_block_convs.size()) != depth) {
    throw ConfigError("depth " + std::to_string(depth) + " requires " + std::to_string(depth) +
                      " encoder channel and conv counts, got " + std::to_string(encoder_channels.size()) + " and " +
                      std::to_string(encoder_block_convs.size()));
  }
  for (int i = 0; i < depth; ++i) {
    if (encoder_channels[i] < 1) throw ConfigError("encoder channels must be positive");
    if (encoder_block_convs[i] < 1) throw ConfigError("every encoder stage needs at least one convolution");
  }
}

std::vector<ParamSpec> unet_parameter_layout(const UNetConfig& config) {
  config.validate();
  const auto& ch = config.encoder_channels;
  std::vector<ParamSpec> specs;
  auto conv = [&](const std::string& prefix, int out_c, int in_c, int k) {
    specs.push_back({prefix + ".weight", Shape4{out_c, in_c, k, k}, in_c * k * k});
    specs.push_back({prefix + ".bias", Shape4{1, out_c, 1, 1}, 0});
  };
  for (int i = 0; i < config.depth; ++i) {
    for (int j = 0; j < config.encoder_block_convs[i]; ++j) {
      const int in_c = j > 0 ? ch[i] : (i == 0 ? config.in_channels : ch[i - 1]);
      conv("enc" + std::to_string(i) + ".conv" + std::to_string(j), ch[i], in_c, 3);
    }
  }
  conv("center", ch.back(), ch.back(), 3);
  for (int i = config.depth - 1; i >= 0; --i) {
    const int deeper = i == config.depth - 1 ? ch.back() : ch[i + 1];
    const std::string prefix = "dec" + std::to_string(i);
    // Stride equals kernel, so each output pixel sees exactly one tap per input channel.
    specs.push_back({prefix + ".up.weight", Shape4{deeper, ch[i], 2, 2}, deeper});
    conv(prefix + ".conv", ch[i], 2 * ch[i], 3);
  }
  conv("head", 1, ch[0], 1);
  return specs;
}

template <typename T>
UNetModel<T>::UNetModel(UNetConfig config, Prng& rng) : config_(std::move(config)) {
  for (const auto& spec : unet_parameter_layout(config_)) {
    std::vector<T> values(spec.shape.numel(), T(0));
    if (spec.fan_in > 0) {
      const double bound = std::sqrt(6.0 / spec.fan_in);
      for (auto& v : values) v = static_cast<T>(rng.uniform(-bound, bound));
    }
    params_.push_back({spec.name, Tensor<T>::from_vector(spec.shape, std::move(values), true)});
  }
}

template <typename T>
UNetModel<T>::UNetModel(UNetConfig config, std::vector<NamedParameter<T>> parameters)
    : config_(std::move(config)), params_(std::move(parameters)) {
  const auto layout = unet_parameter_layout(config_);
  if (layout.size() != params_.size()) {
    throw ShapeError("U-Net '" + config_.preset + "' has " + std::to_string(layout.size()) + " parameter tensors, got " +
                     std::to_string(params_.size()));
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (layout[i].name != params_[i].name || layout[i].shape != params_[i].tensor.shape()) {
      throw ShapeError("parameter " + std::to_string(i) + " expected " + layout[i].name + " " +
                       layout[i].shape.str() + ", got " + params_[i].name + " " + params_[i].tensor.shape().str());
    }
    params_[i].tensor.set_requires_grad(true);
  }
}

template <typename T>
std::size_t UNetModel<T>::parameter_count() const {
  std::size_t total = 0;
  for (const auto& p : params_) total += p.tensor.numel();
  return total;
}

template <typename T>
const Tensor<T>& UNetModel<T>::parameter(std::string_view name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p.tensor;
  }
  throw ConfigError("no parameter named '" + std::string(name) + "'");
}

template <typename T>
Tensor<T> UNetModel<T>::forward(const Tensor<T>& batch) const {
  const Shape4 s = batch.shape();
  if (s.c != config_.in_channels) {
    throw ShapeError("U-Net expects " + std::to_string(config_.in_channels) + " input channels, got batch " + s.str());
  }
  const int div = config_.divisor();
  if (s.h % div != 0 || s.w % div != 0) {
    throw ShapeError("U-Net of depth " + std::to_string(config_.depth) + " requires spatial dims divisible by " +
                     std::to_string(div) + ", got batch " + s.str());
  }

  std::size_t next = 0;
  auto take = [&]() -> const Tensor<T>& { return params_[next++].tensor; };
  auto conv_relu = [&](const Tensor<T>& x, int pad) {
    const auto& w = take();
    const auto& b = take();
    return relu(conv2d(x, w, b, 1, pad));
  };

  Tensor<T> x = batch;
  std::vector<Tensor<T>> skips;
  for (int i = 0; i < config_.depth; ++i) {
    for (int j = 0; j < config_.encoder_block_convs[i]; ++j) x = conv_relu(x, 1);
    skips.push_back(x);
    x = maxpool2d(x, 2);
  }
  x = conv_relu(x, 1);
  for (int i = config_.depth - 1; i >= 0; --i) {
    const auto& up_w = take();
    x = concat_channels(relu(conv_transpose2d(x, up_w, 2)), skips[i]);
    x = conv_relu(x, 1);
  }
  const auto& head_w = take();
  const auto& head_b = take();
  return conv2d(x, head_w, head_b, 1, 0);
}

template <typename T>
void UNetModel<T>::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

template class UNetModel<float>;
template class UNetModel<double>;

}  // namespace aquaseg
