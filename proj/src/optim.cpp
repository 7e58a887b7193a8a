#include "fsca/optim.hpp"

#include <cmath>
#include <string>

#include "fsca/errors.hpp"

namespace fsca {

OptimizerState make_optimizer_state(std::span<const Tensor> params, AdamConfig config) {
  OptimizerState state;
  state.config = config;
  for (const auto& p : params) {
    state.first_moment.emplace_back(p.numel(), 0.0);
    state.second_moment.emplace_back(p.numel(), 0.0);
  }
  return state;
}

void adam_step(std::span<Tensor> params, std::span<const std::vector<double>> grads,
               OptimizerState& state) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    throw DimensionError("adam_step: " + std::to_string(params.size()) + " parameters, " +
                         std::to_string(grads.size()) + " gradients, " +
                         std::to_string(state.first_moment.size()) + " moment slots");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::size_t n = params[i].numel();
    if (state.first_moment[i].size() != n || (!grads[i].empty() && grads[i].size() != n)) {
      throw DimensionError("adam_step: parameter " + std::to_string(i) + " has shape " +
                           shape_str(params[i].shape()) + " but mismatched gradient or moments");
    }
  }

  const auto& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correct1 = 1.0 - std::pow(c.beta1, t);
  const double correct2 = 1.0 - std::pow(c.beta2, t);

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto value = params[i].mutable_data();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    const auto& g = grads[i];
    for (std::size_t k = 0; k < value.size(); ++k) {
      const double gk = g.empty() ? 0.0 : g[k];
      m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * gk;
      v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * gk * gk;
      const double m_hat = m[k] / correct1;
      const double v_hat = v[k] / correct2;
      value[k] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
  }
}

void adam_step(std::span<Tensor> params, OptimizerState& state) {
  std::vector<std::vector<double>> grads;
  grads.reserve(params.size());
  for (const auto& p : params) {
    grads.emplace_back(p.grad().begin(), p.grad().end());
  }
  adam_step(params, grads, state);
}

void zero_grads(std::span<Tensor> params) {
  for (auto& p : params) p.zero_grad();
}

}  // namespace fsca
