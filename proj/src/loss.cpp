#include "aquaseg/loss.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "aquaseg/errors.hpp"
#include "aquaseg/ops.hpp"

namespace aquaseg {

namespace {

void require_same(const Shape4& a, const Shape4& b, const char* what) {
  if (a != b) throw ShapeError(std::string(what) + ": prediction " + a.str() + " and target " + b.str() + " differ");
}

template <typename T>
void require_binary(const Tensor<T>& target, const char* what) {
  for (const T v : target.data()) {
    if (v != T(0) && v != T(1)) {
      throw ContractError(std::string(what) + ": target must contain only 0 and 1, found " + std::to_string(v));
    }
  }
}

double clamp_prob(double p) { return std::clamp(p, kSigmoidClamp, 1.0 - kSigmoidClamp); }

}  // namespace

template <typename T>
Tensor<T> binary_cross_entropy(const Tensor<T>& probs, const Tensor<T>& target) {
  require_same(probs.shape(), target.shape(), "binary_cross_entropy");
  const auto p = probs.data();
  const auto t = target.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pi = clamp_prob(p[i]);
    const double ti = t[i];
    acc -= ti * std::log(pi) + (1.0 - ti) * std::log(1.0 - pi);
  }
  const double n = static_cast<double>(p.size());
  return record_op<T>(Shape4{1, 1, 1, 1}, {static_cast<T>(acc / n)}, {probs, target}, [n](detail::Node<T>& node) {
    const double up = static_cast<double>(node.grad[0]) / n;
    const auto& pv = node.inputs[0]->data;
    const auto& tv = node.inputs[1]->data;
    if (node.inputs[0]->requires_grad) {
      auto& g = node.inputs[0]->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double pi = clamp_prob(pv[i]);
        const double ti = tv[i];
        g[i] += static_cast<T>(-up * (ti / pi - (1.0 - ti) / (1.0 - pi)));
      }
    }
    if (node.inputs[1]->requires_grad) {
      auto& g = node.inputs[1]->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double pi = clamp_prob(pv[i]);
        g[i] += static_cast<T>(-up * (std::log(pi) - std::log(1.0 - pi)));
      }
    }
  });
}

template <typename T>
Tensor<T> soft_dice(const Tensor<T>& probs, const Tensor<T>& target, double smoothing) {
  require_same(probs.shape(), target.shape(), "soft_dice");
  const auto p = probs.data();
  const auto t = target.data();
  double inter = 0.0, sp = 0.0, st = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    inter += static_cast<double>(p[i]) * static_cast<double>(t[i]);
    sp += p[i];
    st += t[i];
  }
  const double num = 2.0 * inter + smoothing;
  const double den = sp + st + smoothing;
  return record_op<T>(Shape4{1, 1, 1, 1}, {static_cast<T>(1.0 - num / den)}, {probs, target},
                      [num, den](detail::Node<T>& node) {
                        const double up = node.grad[0];
                        const double common = num / (den * den);
                        for (std::size_t k = 0; k < 2; ++k) {
                          if (!node.inputs[k]->requires_grad) continue;
                          auto& g = node.inputs[k]->ensure_grad();
                          const auto& other = node.inputs[1 - k]->data;
                          for (std::size_t i = 0; i < g.size(); ++i) {
                            g[i] += static_cast<T>(up * (common - 2.0 * other[i] / den));
                          }
                        }
                      });
}

template <typename T>
Tensor<T> soft_dice_squared(const Tensor<T>& p, const Tensor<T>& q, double smoothing) {
  require_same(p.shape(), q.shape(), "soft_dice_squared");
  const auto a = p.data();
  const auto b = q.data();
  double inter = 0.0, sa = 0.0, sb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double ai = a[i], bi = b[i];
    inter += ai * bi;
    sa += ai * ai;
    sb += bi * bi;
  }
  const double num = 2.0 * inter + smoothing;
  const double den = (sa + sb) + smoothing;
  return record_op<T>(Shape4{1, 1, 1, 1}, {static_cast<T>(1.0 - num / den)}, {p, q}, [num, den](detail::Node<T>& node) {
    const double up = node.grad[0];
    for (std::size_t k = 0; k < 2; ++k) {
      if (!node.inputs[k]->requires_grad) continue;
      auto& g = node.inputs[k]->ensure_grad();
      const auto& self = node.inputs[k]->data;
      const auto& other = node.inputs[1 - k]->data;
      for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] += static_cast<T>(up * (2.0 * self[i] * num / (den * den) - 2.0 * other[i] / den));
      }
    }
  });
}

template <typename T>
Tensor<T> bce_loss(const Tensor<T>& logits, const Tensor<T>& target) {
  require_same(logits.shape(), target.shape(), "bce_loss");
  require_binary(target, "bce_loss");
  return binary_cross_entropy(sigmoid(logits), target);
}

template <typename T>
Tensor<T> dice_loss(const Tensor<T>& logits, const Tensor<T>& target, double smoothing) {
  require_same(logits.shape(), target.shape(), "dice_loss");
  require_binary(target, "dice_loss");
  return soft_dice(sigmoid(logits), target, smoothing);
}

template <typename T>
LossValue<T> combine_losses(const Tensor<T>& bce, const Tensor<T>& dice, const LossWeights& weights) {
  LossValue<T> out;
  out.bce = static_cast<double>(bce.item());
  out.dice = static_cast<double>(dice.item());
  out.total = add(scale(bce, static_cast<T>(weights.bce)), scale(dice, static_cast<T>(weights.dice)));
  return out;
}

template <typename T>
LossValue<T> combined_loss(const Tensor<T>& logits, const Tensor<T>& target, const LossWeights& weights,
                           double smoothing) {
  require_same(logits.shape(), target.shape(), "combined_loss");
  require_binary(target, "combined_loss");
  const auto probs = sigmoid(logits);
  return combine_losses(binary_cross_entropy(probs, target), soft_dice(probs, target, smoothing), weights);
}

double iou_metric(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> target) {
  if (pred.size() != target.size()) {
    throw ShapeError("iou_metric: mask sizes differ (" + std::to_string(pred.size()) + " vs " +
                     std::to_string(target.size()) + ")");
  }
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    inter += (pred[i] & target[i]) != 0;
    uni += (pred[i] | target[i]) != 0;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double dice_metric(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> target) {
  if (pred.size() != target.size()) {
    throw ShapeError("dice_metric: mask sizes differ (" + std::to_string(pred.size()) + " vs " +
                     std::to_string(target.size()) + ")");
  }
  std::size_t inter = 0, sp = 0, st = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    inter += (pred[i] & target[i]) != 0;
    sp += pred[i] != 0;
    st += target[i] != 0;
  }
  return sp + st == 0 ? 1.0 : 2.0 * static_cast<double>(inter) / static_cast<double>(sp + st);
}

std::vector<std::uint8_t> threshold_logits(std::span<const float> logits, double threshold) {
  std::vector<std::uint8_t> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double p = 1.0 / (1.0 + std::exp(-static_cast<double>(logits[i])));
    out[i] = p > threshold ? 1 : 0;
  }
  return out;
}

void MetricsReport::add_sample(double sample_iou, double sample_dice) {
  iou.push_back(sample_iou);
  dice.push_back(sample_dice);
}

void MetricsReport::finalize() {
  double si = 0.0, sd = 0.0;
  for (std::size_t i = 0; i < iou.size(); ++i) {
    si += iou[i];
    sd += dice[i];
  }
  const double n = static_cast<double>(iou.size());
  mean_iou = iou.empty() ? 0.0 : si / n;
  mean_dice = dice.empty() ? 0.0 : sd / n;
}

std::string metrics_csv_header() { return "training_samples,model,IoU,Dice"; }

std::string metrics_csv_row(std::size_t training_samples, const std::string& model, const MetricsReport& report) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%zu,%s,%.4f,%.4f", training_samples, model.c_str(), report.mean_iou,
                report.mean_dice);
  return buf;
}

#define AQUASEG_INSTANTIATE_LOSS(T)                                                                  \
  template Tensor<T> binary_cross_entropy(const Tensor<T>&, const Tensor<T>&);                     \
  template Tensor<T> soft_dice(const Tensor<T>&, const Tensor<T>&, double);                        \
  template Tensor<T> soft_dice_squared(const Tensor<T>&, const Tensor<T>&, double);                \
  template Tensor<T> bce_loss(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> dice_loss(const Tensor<T>&, const Tensor<T>&, double);                        \
  template LossValue<T> combine_losses(const Tensor<T>&, const Tensor<T>&, const LossWeights&);    \
  template LossValue<T> combined_loss(const Tensor<T>&, const Tensor<T>&, const LossWeights&, double);

AQUASEG_INSTANTIATE_LOSS(float)
AQUASEG_INSTANTIATE_LOSS(double)

}  // namespace aquaseg
