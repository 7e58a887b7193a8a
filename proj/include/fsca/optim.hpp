#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fsca/tensor.hpp"

namespace fsca {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment accumulators for one parameter list, in order.
struct OptimizerState {
  AdamConfig config;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::uint64_t step = 0;
};

OptimizerState make_optimizer_state(std::span<const Tensor> params, AdamConfig config = {});

/// One bias-corrected adaptive-moment update. `grads[i]` pairs with
/// `params[i]`; an empty gradient counts as zero.
void adam_step(std::span<Tensor> params, std::span<const std::vector<double>> grads,
               OptimizerState& state);

/// Same, reading each parameter's own gradient slot.
void adam_step(std::span<Tensor> params, OptimizerState& state);

void zero_grads(std::span<Tensor> params);

}  // namespace fsca
