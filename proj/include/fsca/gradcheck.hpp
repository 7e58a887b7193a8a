#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fsca/tensor.hpp"

namespace fsca {

using ScalarFn = std::function<Tensor(const std::vector<Tensor>&)>;

struct GradCheckOptions {
  // Five-point stencil f(x±h), f(x±2h). A wide step keeps rounding noise far
  // below the smallest gradients of interest; truncation is O(h⁴).
  double step = 1e-4;
  // 0 checks every element; otherwise a seeded random subset per input.
  std::size_t max_elements_per_input = 0;
  std::uint64_t seed = 0;
  // Central differences at h and 2h disagreeing by more than this (relative)
  // mark a ReLU/clamp kink inside the stencil; such elements are counted but
  // not scored.
  double kink_tolerance = 1e-5;
  // Elements whose h and 2h estimates differ by more than this fraction of
  // the gradient (rounding noise on tiny gradients) are counted as unresolved.
  double resolution = 1e-5;
};

struct GradCheckResult {
  std::string name;
  std::size_t cases = 0;
  std::size_t elements = 0;
  std::size_t kinks_skipped = 0;
  std::size_t unresolved = 0;
  // max |analytic - numeric| / (|analytic| + 1e-8)
  double max_rel_error = 0.0;

  void merge(const GradCheckResult& other);
};

/// Compares reverse-mode gradients of `f` against central finite differences
/// for every input that requires grad. Input values are restored afterwards.
GradCheckResult check_gradients(const ScalarFn& f, const std::vector<Tensor>& inputs,
                                const GradCheckOptions& options = {});

struct GradSuiteOptions {
  std::size_t cases_per_op = 100;
  std::size_t composed_cases = 100;
  std::uint64_t seed = 2024;
  GradCheckOptions check;
};

/// Random small instances of every differentiable op, the attention and MI
/// blocks, and the full two-batch training objective. One result per entry.
std::vector<GradCheckResult> run_gradcheck_suite(const GradSuiteOptions& options = {});

}  // namespace fsca
