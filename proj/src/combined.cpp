#include "aquaseg/combined.hpp"

#include <cmath>
#include <cstdio>

#include "aquaseg/errors.hpp"
#include "aquaseg/ops.hpp"

namespace aquaseg {

void CombinedConfig::validate() const {
  if (bridge_factor < 2) throw ConfigError("bridge factor must be >= 2, got " + std::to_string(bridge_factor));
  for (double w : {weights.w1, weights.w2, weights.w3}) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("loss weights must be finite and >= 0");
  }
}

template <typename T>
CombinedModel<T>::CombinedModel(UNetModel<T> unet1, UNetModel<T> unet2, CombinedConfig config)
    : unet1_(std::move(unet1)), unet2_(std::move(unet2)), config_(config) {
  config_.validate();
  if (unet1_.config().in_channels != unet2_.config().in_channels) {
    throw ConfigError("unet1 and unet2 must take the same number of input bands");
  }
}

template <typename T>
std::vector<NamedParameter<T>> CombinedModel<T>::all_parameters() const {
  std::vector<NamedParameter<T>> out;
  for (const auto& p : unet1_.parameters()) out.push_back({"unet1/" + p.name, p.tensor});
  for (const auto& p : unet2_.parameters()) out.push_back({"unet2/" + p.name, p.tensor});
  return out;
}

template <typename T>
void CombinedModel<T>::zero_grad() {
  unet1_.zero_grad();
  unet2_.zero_grad();
}

template <typename T>
Tensor<T> bridge_down(const Tensor<T>& vhr, int factor) {
  return avgpool_downsample(vhr, factor);
}

template <typename T>
Tensor<T> bridge_up(const Tensor<T>& hr_logits, int factor) {
  return upsample_nearest(hr_logits, factor);
}

template <typename T>
ConsistencyValue<T> consistency_loss(const Tensor<T>& p_a, const Tensor<T>& p_b, const LossWeights& weights,
                                     double smoothing) {
  ConsistencyValue<T> out;
  out.bce = binary_cross_entropy(p_a, p_b);
  out.dice = soft_dice_squared(p_a, p_b, smoothing);
  out.total = add(scale(out.bce, static_cast<T>(weights.bce)), scale(out.dice, static_cast<T>(weights.dice)));
  return out;
}

namespace {

template <typename T>
Tensor<T> stream_forward(const UNetModel<T>& net, const Tensor<T>& images, const char* stream) {
  try {
    return net.forward(images);
  } catch (const ShapeError& e) {
    throw ShapeError(std::string(stream) + " stream: " + e.what());
  }
}

template <typename T>
void check_masks(const Tensor<T>& images, const Tensor<T>& masks, const char* stream) {
  if (!images.defined() || !masks.defined()) throw ShapeError(std::string(stream) + " stream: images and masks required");
  const auto& s = images.shape();
  const Shape4 expected{s.n, 1, s.h, s.w};
  if (masks.shape() != expected) {
    throw ShapeError(std::string(stream) + " stream: masks " + masks.shape().str() + " do not match images " + s.str());
  }
}

}  // namespace

template <typename T>
CombinedLossReport<T> combined_forward(const CombinedModel<T>& model, const TriBatch<T>& batch) {
  const auto& cfg = model.config();
  check_masks(batch.vhr_images, batch.vhr_masks, "vhr_labelled");
  check_masks(batch.hr_images, batch.hr_masks, "hr");

  CombinedLossReport<T> r;
  const auto l1 = combined_loss(stream_forward(model.unet1(), batch.vhr_images, "vhr_labelled"), batch.vhr_masks,
                                cfg.loss_weights, cfg.smoothing);
  const auto l2 = combined_loss(stream_forward(model.unet2(), batch.hr_images, "hr"), batch.hr_masks,
                                cfg.loss_weights, cfg.smoothing);
  r.l1_node = l1.total;
  r.l2_node = l2.total;
  r.l1 = l1.total.item();
  r.l2 = l2.total.item();
  auto total = add(scale(l1.total, static_cast<T>(cfg.weights.w1)), scale(l2.total, static_cast<T>(cfg.weights.w2)));

  if (batch.vhr_unlabelled.defined()) {
    const auto& x = batch.vhr_unlabelled;
    const int f = cfg.bridge_factor;
    if (x.shape().h % f != 0 || x.shape().w % f != 0) {
      throw ShapeError("vhr_unlabelled stream: spatial dims of " + x.shape().str() + " not divisible by bridge factor " +
                       std::to_string(f));
    }
    auto p_a = sigmoid(stream_forward(model.unet1(), x, "vhr_unlabelled"));
    auto p_b = sigmoid(bridge_up(stream_forward(model.unet2(), bridge_down(x, f), "vhr_unlabelled (bridged)"), f));
    if (cfg.detach_vhr) p_a = p_a.detach();
    if (cfg.detach_hr) p_b = p_b.detach();
    const auto l3 = consistency_loss(p_a, p_b, cfg.loss_weights, cfg.smoothing);
    r.has_l3 = true;
    r.l3_node = l3.total;
    r.l3 = l3.total.item();
    r.l3_bce = l3.bce.item();
    r.l3_dice = l3.dice.item();
    total = add(total, scale(l3.total, static_cast<T>(cfg.weights.w3)));
  }
  r.total_node = total;
  r.total = total.item();
  return r;
}

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

Checkpoint combined_checkpoint(const CombinedModel<float>& model) {
  Checkpoint ckpt;
  const auto& c = model.config();
  ckpt.set_meta("model", "combined");
  ckpt.set_meta("combined.bridge_factor", std::to_string(c.bridge_factor));
  ckpt.set_meta("combined.w1", format_double(c.weights.w1));
  ckpt.set_meta("combined.w2", format_double(c.weights.w2));
  ckpt.set_meta("combined.w3", format_double(c.weights.w3));
  append_unet(ckpt, model.unet1(), "unet1");
  append_unet(ckpt, model.unet2(), "unet2");
  return ckpt;
}

CombinedModel<float> extract_combined(const Checkpoint& ckpt) {
  CombinedConfig c;
  try {
    c.bridge_factor = std::stoi(ckpt.meta("combined.bridge_factor"));
    c.weights.w1 = std::stod(ckpt.meta("combined.w1"));
    c.weights.w2 = std::stod(ckpt.meta("combined.w2"));
    c.weights.w3 = std::stod(ckpt.meta("combined.w3"));
  } catch (const std::logic_error&) {
    throw FormatError(FormatError::Kind::malformed, "AQCK: unparsable combined-model metadata");
  }
  return CombinedModel<float>(extract_unet(ckpt, "unet1"), extract_unet(ckpt, "unet2"), c);
}

#define AQUASEG_INSTANTIATE_COMBINED(T)                                                                       \
  template class CombinedModel<T>;                                                                            \
  template Tensor<T> bridge_down(const Tensor<T>&, int);                                                      \
  template Tensor<T> bridge_up(const Tensor<T>&, int);                                                        \
  template ConsistencyValue<T> consistency_loss(const Tensor<T>&, const Tensor<T>&, const LossWeights&, double); \
  template CombinedLossReport<T> combined_forward(const CombinedModel<T>&, const TriBatch<T>&);

AQUASEG_INSTANTIATE_COMBINED(float)
AQUASEG_INSTANTIATE_COMBINED(double)

}  // namespace aquaseg
