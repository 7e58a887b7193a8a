#include "fsca/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fsca/errors.hpp"
#include "fsca/rng.hpp"

namespace fsca {

void GradCheckResult::merge(const GradCheckResult& other) {
  cases += other.cases;
  elements += other.elements;
  kinks_skipped += other.kinks_skipped;
  unresolved += other.unresolved;
  max_rel_error = std::max(max_rel_error, other.max_rel_error);
}

GradCheckResult check_gradients(const ScalarFn& f, const std::vector<Tensor>& inputs,
                                const GradCheckOptions& options) {
  std::vector<Tensor> args = inputs;
  for (auto& t : args) {
    if (t.requires_grad()) t.zero_grad();
  }
  const Tensor root = f(args);
  if (root.numel() != 1) throw ContractError("check_gradients: function must return a scalar");
  backward(root);
  const double f0 = root.item();

  auto evaluate = [&] { return f(args).item(); };

  GradCheckResult result;
  result.cases = 1;
  Rng rng(options.seed);
  const double h = options.step;

  for (auto& t : args) {
    if (!t.requires_grad()) continue;
    std::vector<double> analytic(t.grad().begin(), t.grad().end());
    if (analytic.empty()) analytic.assign(t.numel(), 0.0);

    std::vector<std::size_t> picks(t.numel());
    std::iota(picks.begin(), picks.end(), std::size_t{0});
    if (options.max_elements_per_input && picks.size() > options.max_elements_per_input) {
      for (std::size_t i = 0; i < options.max_elements_per_input; ++i) {
        std::swap(picks[i], picks[i + rng.index(picks.size() - i)]);
      }
      picks.resize(options.max_elements_per_input);
    }

    auto values = t.mutable_data();
    auto at = [&](std::size_t idx, double offset) {
      values[idx] = offset;
      return evaluate();
    };
    for (std::size_t idx : picks) {
      const double saved = values[idx];
      const double p1 = at(idx, saved + h), m1 = at(idx, saved - h);
      const double p2 = at(idx, saved + 2.0 * h), m2 = at(idx, saved - 2.0 * h);
      values[idx] = saved;

      const double d1 = (p1 - m1) / (2.0 * h);
      const double d2 = (p2 - m2) / (4.0 * h);
      const double numeric = (4.0 * d1 - d2) / 3.0;  // five-point stencil
      // Smooth functions give d1 ≈ d2 and matching second differences up to
      // O(h²). A kink inside [−2h, 2h] breaks at least one of the two.
      const double s1 = (p1 - 2.0 * f0 + m1) / (h * h);
      const double s2 = (p2 - 2.0 * f0 + m2) / (4.0 * h * h);
      const double limit = options.kink_tolerance * (std::abs(numeric) + 1e-3);
      if (std::abs(d1 - d2) > limit || h * std::abs(s1 - s2) > limit) {
        ++result.kinks_skipped;
        continue;
      }
      // The two stencils must agree, and the difference quotient must sit well
      // above one ulp of f, before the estimate is trusted. Tiny gradients
      // drowned in rounding fail this and are counted apart.
      const double ulp_floor = std::numeric_limits<double>::epsilon() *
                               std::max({std::abs(f0), std::abs(p1), std::abs(m1), std::abs(p2), std::abs(m2)}) / h;
      if (numeric == 0.0 && std::abs(analytic[idx]) <= ulp_floor) {
        ++result.elements;  // both flat to within the stencil's resolution
        continue;
      }
      // An analytic value outside that noise band is still scored, so a wrong
      // gradient cannot hide behind a flat numeric estimate.
      const double noise = std::max(std::abs(d1 - d2), ulp_floor);
      if (noise > options.resolution * std::abs(numeric) &&
          std::abs(analytic[idx] - numeric) <= 100.0 * noise) {
        ++result.unresolved;
        continue;
      }
      const double err = std::abs(analytic[idx] - numeric) / (std::abs(analytic[idx]) + 1e-8);
      result.max_rel_error = std::max(result.max_rel_error, err);
      ++result.elements;
    }
  }
  return result;
}

}  // namespace fsca
