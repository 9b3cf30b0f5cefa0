#pragma once

// Naive reference implementations. Each loop follows the textbook definition
// directly and shares no code with the library kernels.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "aquaseg/gradcheck.hpp"
#include "aquaseg/random.hpp"
#include "aquaseg/tensor.hpp"

namespace oracle {

using aquaseg::Prng;
using aquaseg::Shape4;
using aquaseg::Tensor;

struct Array4 {
  Shape4 shape;
  std::vector<double> v;
  double& at(int n, int c, int h, int w) { return v[((static_cast<std::size_t>(n) * shape.c + c) * shape.h + h) * shape.w + w]; }
  double at(int n, int c, int h, int w) const {
    return v[((static_cast<std::size_t>(n) * shape.c + c) * shape.h + h) * shape.w + w];
  }
};

template <typename T>
Array4 from(const Tensor<T>& t) {
  return {t.shape(), std::vector<double>(t.data().begin(), t.data().end())};
}

inline Array4 zeros(Shape4 s) { return {s, std::vector<double>(s.numel(), 0.0)}; }

// out[n,o,y,x] = b[o] + sum_{c,i,j} in[n,c,y*s-p+i,x*s-p+j] * w[o,c,i,j]
inline Array4 conv2d(const Array4& in, const Array4& w, const std::vector<double>& bias, int stride, int pad) {
  const int oh = (in.shape.h + 2 * pad - w.shape.h) / stride + 1;
  const int ow = (in.shape.w + 2 * pad - w.shape.w) / stride + 1;
  Array4 out = zeros({in.shape.n, w.shape.n, oh, ow});
  for (int n = 0; n < in.shape.n; ++n)
    for (int o = 0; o < w.shape.n; ++o)
      for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
          double acc = bias.empty() ? 0.0 : bias[o];
          for (int c = 0; c < in.shape.c; ++c)
            for (int i = 0; i < w.shape.h; ++i)
              for (int j = 0; j < w.shape.w; ++j) {
                const int iy = y * stride - pad + i, ix = x * stride - pad + j;
                if (iy < 0 || ix < 0 || iy >= in.shape.h || ix >= in.shape.w) continue;
                acc += in.at(n, c, iy, ix) * w.at(o, c, i, j);
              }
          out.at(n, o, y, x) = acc;
        }
  return out;
}

// Scatter form: every input pixel spreads in[n,c,y,x] * w[c,o,i,j] to out[n,o,y*s+i,x*s+j].
inline Array4 conv_transpose2d(const Array4& in, const Array4& w, int stride) {
  const int oh = (in.shape.h - 1) * stride + w.shape.h;
  const int ow = (in.shape.w - 1) * stride + w.shape.w;
  Array4 out = zeros({in.shape.n, w.shape.c, oh, ow});
  for (int n = 0; n < in.shape.n; ++n)
    for (int c = 0; c < in.shape.c; ++c)
      for (int y = 0; y < in.shape.h; ++y)
        for (int x = 0; x < in.shape.w; ++x)
          for (int o = 0; o < w.shape.c; ++o)
            for (int i = 0; i < w.shape.h; ++i)
              for (int j = 0; j < w.shape.w; ++j) out.at(n, o, y * stride + i, x * stride + j) += in.at(n, c, y, x) * w.at(c, o, i, j);
  return out;
}

inline Array4 maxpool2d(const Array4& in, int k) {
  Array4 out = zeros({in.shape.n, in.shape.c, in.shape.h / k, in.shape.w / k});
  for (int n = 0; n < in.shape.n; ++n)
    for (int c = 0; c < in.shape.c; ++c)
      for (int y = 0; y < out.shape.h; ++y)
        for (int x = 0; x < out.shape.w; ++x) {
          double best = -std::numeric_limits<double>::infinity();
          for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j) best = std::max(best, in.at(n, c, y * k + i, x * k + j));
          out.at(n, c, y, x) = best;
        }
  return out;
}

inline Array4 avgpool(const Array4& in, int f) {
  Array4 out = zeros({in.shape.n, in.shape.c, in.shape.h / f, in.shape.w / f});
  for (int n = 0; n < in.shape.n; ++n)
    for (int c = 0; c < in.shape.c; ++c)
      for (int y = 0; y < out.shape.h; ++y)
        for (int x = 0; x < out.shape.w; ++x) {
          double s = 0.0;
          for (int i = 0; i < f; ++i)
            for (int j = 0; j < f; ++j) s += in.at(n, c, y * f + i, x * f + j);
          out.at(n, c, y, x) = s / (f * f);
        }
  return out;
}

inline Array4 upsample(const Array4& in, int f) {
  Array4 out = zeros({in.shape.n, in.shape.c, in.shape.h * f, in.shape.w * f});
  for (int n = 0; n < out.shape.n; ++n)
    for (int c = 0; c < out.shape.c; ++c)
      for (int y = 0; y < out.shape.h; ++y)
        for (int x = 0; x < out.shape.w; ++x) out.at(n, c, y, x) = in.at(n, c, y / f, x / f);
  return out;
}

inline double max_abs_diff(const Array4& a, const Array4& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.v.size(); ++i) m = std::max(m, std::abs(a.v[i] - b.v[i]));
  return a.shape == b.shape ? m : std::numeric_limits<double>::infinity();
}

// Pixel counting over the definitions |P∩G|/|P∪G| and 2|P∩G|/(|P|+|G|).
struct Counts {
  long inter = 0, uni = 0, p = 0, g = 0;
};
inline Counts count(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth) {
  Counts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    c.inter += pred[i] && truth[i];
    c.uni += pred[i] || truth[i];
    c.p += pred[i];
    c.g += truth[i];
  }
  return c;
}
inline double iou(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth) {
  const auto c = count(pred, truth);
  return c.uni == 0 ? 1.0 : static_cast<double>(c.inter) / static_cast<double>(c.uni);
}
inline double dice(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth) {
  const auto c = count(pred, truth);
  return c.p + c.g == 0 ? 1.0 : 2.0 * static_cast<double>(c.inter) / static_cast<double>(c.p + c.g);
}

template <typename T>
Tensor<T> random_tensor(Shape4 s, Prng& rng, double lo = -1.0, double hi = 1.0, bool requires_grad = false) {
  std::vector<T> v(s.numel());
  for (auto& x : v) x = static_cast<T>(rng.uniform(lo, hi));
  return Tensor<T>::from_vector(s, std::move(v), requires_grad);
}

template <typename T>
Tensor<T> random_mask(Shape4 s, Prng& rng, double p = 0.5) {
  std::vector<T> v(s.numel());
  for (auto& x : v) x = rng.uniform() < p ? T(1) : T(0);
  return Tensor<T>::from_vector(s, std::move(v));
}

struct GradientPairs {
  std::vector<double> analytic;
  std::vector<double> numeric;

  void append(const GradientPairs& other) {
    analytic.insert(analytic.end(), other.analytic.begin(), other.analytic.end());
    numeric.insert(numeric.end(), other.numeric.begin(), other.numeric.end());
  }
  double relative_error() const { return aquaseg::relative_error(analytic, numeric); }
};

/// Backward on `loss_fn()` next to fourth-order central differences
///   (8 (f(x+h) - f(x-h)) - (f(x+2h) - f(x-2h))) / 12h
/// at the listed coordinates of `leaf`, perturbed in place.
inline GradientPairs gradient_pairs(const std::function<Tensor<double>()>& loss_fn, Tensor<double> leaf,
                                    const std::vector<std::size_t>& coords, double eps = 1e-6) {
  GradientPairs out;
  leaf.zero_grad();
  aquaseg::backward(loss_fn());
  const auto g = leaf.grad();
  auto data = leaf.mutable_data();
  for (auto k : coords) {
    out.analytic.push_back(g.empty() ? 0.0 : g[k]);
    const double v = data[k];
    auto f = [&](double x) {
      data[k] = x;
      return loss_fn().item();
    };
    // Differences first so a flat direction gives exactly zero.
    const double d = 8 * (f(v + eps) - f(v - eps)) - (f(v + 2 * eps) - f(v - 2 * eps));
    data[k] = v;
    out.numeric.push_back(d / (12 * eps));
  }
  leaf.zero_grad();
  return out;
}

/// Norm-wise relative error over the listed coordinates of one leaf.
inline double check_leaf(const std::function<Tensor<double>()>& loss_fn, Tensor<double> leaf,
                         const std::vector<std::size_t>& coords, double eps = 1e-6) {
  return gradient_pairs(loss_fn, leaf, coords, eps).relative_error();
}

inline std::vector<std::size_t> all_coords(std::size_t n) {
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = i;
  return out;
}

inline std::vector<std::size_t> sample_coords(std::size_t n, std::size_t k, Prng& rng) {
  if (k >= n) return all_coords(n);
  auto all = all_coords(n);
  rng.shuffle(all.begin(), all.end());
  all.resize(k);
  std::sort(all.begin(), all.end());
  return all;
}

}  // namespace oracle
