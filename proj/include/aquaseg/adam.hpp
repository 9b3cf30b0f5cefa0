#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "aquaseg/nn.hpp"

namespace aquaseg {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moments are kept in double, one vector per parameter, sized on the first step.
struct OptimizerState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

/// One bias-corrected Adam update from the parameters' accumulated gradients.
/// A parameter without a gradient is treated as having a zero gradient.
/// Every gradient is checked for NaN/inf before anything is modified.
template <typename T>
void adam_step(std::span<NamedParameter<T>> params, OptimizerState& state);

}  // namespace aquaseg
