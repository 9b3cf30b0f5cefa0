#include "aquaseg/adam.hpp"

#include <cmath>

#include "aquaseg/errors.hpp"

namespace aquaseg {

template <typename T>
void adam_step(std::span<NamedParameter<T>> params, OptimizerState& state) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.tensor.numel(), 0.0);
      state.v.emplace_back(p.tensor.numel(), 0.0);
    }
  }
  if (state.m.size() != params.size()) {
    throw ContractError("optimizer state tracks " + std::to_string(state.m.size()) + " parameters, got " +
                        std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& t = params[i].tensor;
    if (state.m[i].size() != t.numel()) {
      throw ContractError("optimizer state shape mismatch for parameter '" + params[i].name + "'");
    }
    const auto g = t.grad();
    for (std::size_t k = 0; k < g.size(); ++k) {
      if (!std::isfinite(g[k])) {
        throw ContractError("non-finite gradient in parameter '" + params[i].name + "' at element " +
                            std::to_string(k));
      }
    }
  }

  const auto& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& tensor = params[i].tensor;
    const auto g = tensor.grad();
    auto data = tensor.mutable_data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < m.size(); ++k) {
      const double gk = g.empty() ? 0.0 : static_cast<double>(g[k]);
      m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * gk;
      v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * gk * gk;
      data[k] = static_cast<T>(data[k] - c.lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + c.eps));
    }
  }
}

template void adam_step(std::span<NamedParameter<float>>, OptimizerState&);
template void adam_step(std::span<NamedParameter<double>>, OptimizerState&);

}  // namespace aquaseg
