#include "fsca/mibench.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "fsca/errors.hpp"
#include "fsca/netblocks.hpp"
#include "fsca/ops.hpp"
#include "fsca/optim.hpp"

namespace fsca {

LatentPair sample_gaussian_pairs(std::size_t n, std::size_t dim, double rho, Rng& rng) {
  if (n == 0 || dim == 0) throw ContractError("sample_gaussian_pairs: empty request");
  if (!(rho > -1.0 && rho < 1.0)) throw ContractError("sample_gaussian_pairs: need |rho| < 1");
  const double noise = std::sqrt(1.0 - rho * rho);
  std::vector<double> z(n * dim), zp(n * dim);
  for (std::size_t i = 0; i < n * dim; ++i) {
    z[i] = rng.normal();
    zp[i] = rho * z[i] + noise * rng.normal();
  }
  return {Tensor::from_data({n, dim}, std::move(z)), Tensor::from_data({n, dim}, std::move(zp))};
}

double analytic_gaussian_mi(double rho, std::size_t dim) {
  if (!(rho > -1.0 && rho < 1.0)) throw ContractError("analytic_gaussian_mi: need |rho| < 1");
  return -0.5 * static_cast<double>(dim) * std::log(1.0 - rho * rho);
}

namespace {

LatentPair embed_pair(const Linear& emb, const LatentPair& p) {
  return {linear_forward(emb, p.z), linear_forward(emb, p.z_plus)};
}

double train_infonce(double rho, std::size_t dim, double tau, std::uint64_t seed,
                     const LatentPair& eval, const MiBenchOptions& o) {
  Linear emb = make_linear(dim, o.embed_dim, derive_seed(seed, 11));
  std::vector<Tensor> params = {emb.weight, emb.bias};
  OptimizerState state = make_optimizer_state(params, {.lr = o.infonce_lr});
  Rng rng(derive_seed(seed, 12));
  for (std::size_t step = 0; step < o.infonce_steps; ++step) {
    const LatentPair batch = sample_gaussian_pairs(o.train_batch, dim, rho, rng);
    zero_grads(params);
    backward(scale(infonce_lower_bound(embed_pair(emb, batch), tau), -1.0));
    adam_step(params, state);
  }
  return infonce_lower_bound(embed_pair(emb, eval), tau).item();
}

double train_club(double rho, std::size_t dim, std::uint64_t seed, const LatentPair& eval,
                  const MiBenchOptions& o) {
  VariationalQ q = init_variational_q(dim, derive_seed(seed, 21));
  std::vector<Tensor> params = q.parameters();
  OptimizerState state = make_optimizer_state(params, {.lr = o.club_lr});
  Rng rng(derive_seed(seed, 22));
  for (std::size_t step = 0; step < o.club_steps; ++step) {
    const LatentPair batch = sample_gaussian_pairs(o.train_batch, dim, rho, rng);
    zero_grads(params);
    backward(q_nll_loss(batch, q));
    adam_step(params, state);
  }
  return club_upper_bound(eval, q).item();
}

}  // namespace

MiEstimate estimate_gaussian_mi(double rho, std::size_t dim, std::uint64_t seed,
                                const MiBenchOptions& options) {
  if (options.temperatures.empty()) throw ConfigError("mibench: no temperatures given");
  Rng eval_rng(derive_seed(seed, 1));
  const LatentPair eval = sample_gaussian_pairs(options.eval_samples, dim, rho, eval_rng);

  MiEstimate est;
  bool first = true;
  for (const double tau : options.temperatures) {
    const double v = train_infonce(rho, dim, tau, seed, eval, options);
    if (first || v > est.infonce) {
      est.infonce = v;
      est.best_temperature = tau;
      first = false;
    }
  }
  est.club = train_club(rho, dim, seed, eval, options);
  return est;
}

std::vector<MiBenchRow> run_mibench(const std::vector<double>& rhos, std::size_t dim,
                                    const std::vector<std::uint64_t>& seeds,
                                    const MiBenchOptions& options) {
  if (seeds.empty()) throw ConfigError("mibench: no seeds given");
  std::vector<MiBenchRow> rows;
  for (const double rho : rhos) {
    MiBenchRow row;
    row.rho = rho;
    row.dim = dim;
    row.analytic = analytic_gaussian_mi(rho, dim);
    for (const auto seed : seeds) {
      const MiEstimate e = estimate_gaussian_mi(rho, dim, seed, options);
      row.seed_infonce.push_back(e.infonce);
      row.seed_club.push_back(e.club);
    }
    const double n = static_cast<double>(seeds.size());
    row.infonce = std::accumulate(row.seed_infonce.begin(), row.seed_infonce.end(), 0.0) / n;
    row.club = std::accumulate(row.seed_club.begin(), row.seed_club.end(), 0.0) / n;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string mibench_csv(const std::vector<MiBenchRow>& rows) {
  std::ostringstream out;
  out << "rho,d,analytic,infonce,club\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.6g,%zu,%.9g,%.9g,%.9g\n", r.rho, r.dim, r.analytic, r.infonce, r.club);
    out << buf;
  }
  return out.str();
}

}  // namespace fsca
