#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "aquaseg/tensor.hpp"

namespace aquaseg {

/// Central differences (f(x + eps e_i) - f(x - eps e_i)) / 2 eps for every
/// element of `x`. `f` is called with a fresh leaf each time and must be
/// deterministic. Used as an oracle for backward().
template <typename T>
Tensor<T> finite_difference_grad(const std::function<T(const Tensor<T>&)>& f, const Tensor<T>& x, T eps = T(1e-4)) {
  std::vector<T> base(x.data().begin(), x.data().end());
  std::vector<T> out(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) {
    auto plus = base;
    auto minus = base;
    plus[i] += eps;
    minus[i] -= eps;
    const T fp = f(Tensor<T>::from_vector(x.shape(), std::move(plus)));
    const T fm = f(Tensor<T>::from_vector(x.shape(), std::move(minus)));
    out[i] = (fp - fm) / (T(2) * eps);
  }
  return Tensor<T>::from_vector(x.shape(), std::move(out));
}

/// ||a - b|| / max(||a||, ||b||, floor): the relative error measure used by gradient checks.
inline double relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-12) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

}  // namespace aquaseg
