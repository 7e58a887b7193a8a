#include "fsca/mibounds.hpp"

#include <cmath>
#include <string>

#include "fsca/errors.hpp"
#include "fsca/ops.hpp"
#include "fsca/rng.hpp"

namespace fsca {

std::vector<std::pair<std::string, Tensor>> VariationalQ::named_parameters() const {
  return {{"q.hidden.weight", hidden.weight},
          {"q.hidden.bias", hidden.bias},
          {"q.mean.weight", mean.weight},
          {"q.mean.bias", mean.bias},
          {"q.log_variance.weight", log_variance.weight},
          {"q.log_variance.bias", log_variance.bias}};
}

std::vector<Tensor> VariationalQ::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

VariationalQ init_variational_q(std::size_t latent_dim, std::uint64_t seed,
                                std::size_t hidden_width) {
  if (latent_dim == 0) throw ConfigError("variational q: latent_dim must be positive");
  const std::size_t width = hidden_width ? hidden_width : 2 * latent_dim;
  VariationalQ q;
  q.hidden = make_linear(latent_dim, width, derive_seed(seed, 0));
  // He scaling for the ReLU layer.
  for (auto& v : q.hidden.weight.mutable_data()) v *= std::sqrt(2.0);
  q.mean = make_linear(width, latent_dim, derive_seed(seed, 1));
  q.log_variance = make_linear(width, latent_dim, derive_seed(seed, 2));
  for (auto& v : q.log_variance.weight.mutable_data()) v *= 0.1;
  return q;
}

namespace {

Linear frozen_copy(const Linear& layer) { return {layer.weight.detach(), layer.bias.detach()}; }

void require_pair(const LatentPair& pair, const char* who) {
  if (pair.size() == 0) throw ContractError(std::string(who) + ": empty batch (N = 0)");
  if (pair.z.shape() != pair.z_plus.shape() || pair.z.rank() != 2) {
    throw DimensionError(std::string(who) + ": latent shapes " + shape_str(pair.z.shape()) +
                         " and " + shape_str(pair.z_plus.shape()) + " are not aligned N×d");
  }
}

}  // namespace

GaussianParams q_forward(const VariationalQ& q, const Tensor& z, bool frozen) {
  const Linear hidden = frozen ? frozen_copy(q.hidden) : q.hidden;
  const Linear mean = frozen ? frozen_copy(q.mean) : q.mean;
  const Linear log_variance = frozen ? frozen_copy(q.log_variance) : q.log_variance;
  const Tensor h = relu(linear_forward(hidden, z));
  return {linear_forward(mean, h),
          clamp(linear_forward(log_variance, h), q.logvar_min, q.logvar_max)};
}

Tensor embed_latent(const Tensor& features, const Linear& projection) {
  if (features.rank() != 3 || features.dim(0) != projection.weight.dim(0)) {
    throw DimensionError("embed_latent: features " + shape_str(features.shape()) +
                         " do not match projection " + shape_str(projection.weight.shape()));
  }
  return linear_forward(projection, mean_spatial(features));
}

Tensor embed_latents(const std::vector<Tensor>& features, const Linear& projection) {
  if (features.empty()) throw ContractError("embed_latents: no features");
  std::vector<Tensor> pooled;
  pooled.reserve(features.size());
  for (const auto& f : features) {
    if (f.rank() != 3 || f.dim(0) != projection.weight.dim(0)) {
      throw DimensionError("embed_latents: features " + shape_str(f.shape()) +
                           " do not match projection " + shape_str(projection.weight.shape()));
    }
    pooled.push_back(mean_spatial(f));
  }
  return linear_forward(projection, stack(pooled));
}

Tensor infonce_lower_bound(const LatentPair& pair, double temperature) {
  require_pair(pair, "infonce_lower_bound");
  if (!(temperature > 0.0)) throw ContractError("infonce_lower_bound: temperature must be > 0");
  const double n = static_cast<double>(pair.size());
  const Tensor sim = matmul(normalize_rows(pair.z), transpose(normalize_rows(pair.z_plus)));
  const Tensor log_ratio = diagonal(log_softmax_rows(scale(sim, 1.0 / temperature)));
  return add_scalar(mean(log_ratio), std::log(n));
}

Tensor q_logprob(const VariationalQ& q, const Tensor& z, const Tensor& z_plus, bool frozen) {
  const auto g = q_forward(q, z, frozen);
  return gaussian_logprob_pairs(g.mean, g.log_variance, z_plus);
}

Tensor club_from_logprob_matrix(const Tensor& logprob) {
  if (logprob.rank() != 2 || logprob.dim(0) != logprob.dim(1) || logprob.dim(0) == 0) {
    throw ContractError("club: log-density matrix must be square and non-empty");
  }
  // Summed over (i, j) and (j, i) together: when q ignores z the rows are
  // bitwise equal, every pair term is (a - b) + (b - a) = 0 and the result is
  // exactly zero instead of rounding noise.
  const std::size_t n = logprob.dim(0);
  const auto L = logprob.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      acc += (L[i * n + i] - L[i * n + j]) + (L[j * n + j] - L[j * n + i]);
    }
  }
  const double nn = static_cast<double>(n);
  return Tensor::make_result({}, {acc / (nn * nn)}, {logprob}, [n, nn](detail::Node& self) {
    detail::Node& parent = *self.parents[0];
    if (!parent.requires_grad) return;
    auto& g = parent.grad_buffer();
    const double up = self.grad[0];
    for (std::size_t k = 0; k < n * n; ++k) g[k] -= up / (nn * nn);
    for (std::size_t i = 0; i < n; ++i) g[i * n + i] += up / nn;
  });
}

Tensor club_upper_bound(const LatentPair& pair, const VariationalQ& q) {
  require_pair(pair, "club_upper_bound");
  const auto g = q_forward(q, pair.z, /*frozen=*/true);
  return club_from_logprob_matrix(gaussian_logprob_matrix(g.mean, g.log_variance, pair.z_plus));
}

Tensor q_nll_loss(const LatentPair& pair, const VariationalQ& q) {
  require_pair(pair, "q_nll_loss");
  return scale(mean(q_logprob(q, pair.z.detach(), pair.z_plus.detach())), -1.0);
}

}  // namespace fsca
