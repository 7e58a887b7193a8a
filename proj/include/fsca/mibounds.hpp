#pragma once

#include <cstdint>
#include <vector>

#include "fsca/netblocks.hpp"
#include "fsca/tensor.hpp"

namespace fsca {

/// Row-aligned latent pairs (z_i, z_i⁺), both N×d_z.
struct LatentPair {
  Tensor z;
  Tensor z_plus;

  std::size_t size() const { return z.defined() ? z.dim(0) : 0; }
};

/// Variational conditional q(z⁺ | z): a diagonal Gaussian whose mean and
/// log-variance come from a two-layer ReLU MLP. Its parameters are kept apart
/// from the main network and trained only through q_nll_loss.
struct VariationalQ {
  Linear hidden;      // d_z -> width
  Linear mean;        // width -> d_z
  Linear log_variance;  // width -> d_z
  double logvar_min = -10.0;
  double logvar_max = 10.0;

  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<Tensor> parameters() const;
};

/// Hidden width defaults to 2·d_z.
VariationalQ init_variational_q(std::size_t latent_dim, std::uint64_t seed,
                                std::size_t hidden_width = 0);

struct GaussianParams {
  Tensor mean;
  Tensor log_variance;  // clamped
};

/// `frozen` evaluates with detached copies of q's parameters, so no gradient
/// reaches them.
GaussianParams q_forward(const VariationalQ& q, const Tensor& z, bool frozen = false);

/// Global average pool over h×w then the affine map: C×h×w -> d_z.
Tensor embed_latent(const Tensor& features, const Linear& projection);
/// Batched form: N feature maps -> N×d_z.
Tensor embed_latents(const std::vector<Tensor>& features, const Linear& projection);

/// ln N + (1/N)·Σ_i log softmax_j(cos(z_i, z_j⁺)/τ)[i]. Always ≤ ln N.
Tensor infonce_lower_bound(const LatentPair& pair, double temperature);

/// log q(z⁺_i | z_i) per row.
Tensor q_logprob(const VariationalQ& q, const Tensor& z, const Tensor& z_plus, bool frozen = false);

/// (1/N)Σ_i [log q(z⁺_i|z_i) − (1/N)Σ_j log q(z⁺_j|z_i)], with q frozen.
Tensor club_upper_bound(const LatentPair& pair, const VariationalQ& q);
/// Same estimator from a precomputed matrix L_ij = log q(z⁺_j | z_i).
Tensor club_from_logprob_matrix(const Tensor& logprob);

/// −(1/N)Σ_i log q(z⁺_i|z_i), with latents detached (gradient reaches q only).
Tensor q_nll_loss(const LatentPair& pair, const VariationalQ& q);

}  // namespace fsca
