#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fsca/mibounds.hpp"
#include "fsca/rng.hpp"

namespace fsca {

/// z ~ N(0, I_d), z⁺ = ρ·z + sqrt(1−ρ²)·ε, n rows each.
LatentPair sample_gaussian_pairs(std::size_t n, std::size_t dim, double rho, Rng& rng);

/// −(d/2)·ln(1−ρ²) nats.
double analytic_gaussian_mi(double rho, std::size_t dim);

struct MiBenchOptions {
  std::size_t eval_samples = 1000;  // held-out batch both estimators are scored on
  std::size_t train_batch = 256;    // fresh batch per optimisation step
  // InfoNCE critic: shared affine embedding to embed_dim, then cosine / τ.
  std::size_t embed_dim = 16;
  std::size_t infonce_steps = 400;
  double infonce_lr = 1e-2;
  std::vector<double> temperatures = {0.1, 0.5, 1.0};
  std::size_t club_steps = 1500;
  double club_lr = 3e-3;
};

struct MiEstimate {
  double infonce = 0.0;  // best over temperatures
  double best_temperature = 0.0;
  double club = 0.0;
};

/// Trains both critics on fresh samples from the given correlation and scores
/// them on an independent held-out batch. rho = 0 gives independent pairs.
MiEstimate estimate_gaussian_mi(double rho, std::size_t dim, std::uint64_t seed,
                                const MiBenchOptions& options = {});

struct MiBenchRow {
  double rho = 0.0;
  std::size_t dim = 0;
  double analytic = 0.0;
  double infonce = 0.0;  // seed mean
  double club = 0.0;
  std::vector<double> seed_infonce;
  std::vector<double> seed_club;
};

std::vector<MiBenchRow> run_mibench(const std::vector<double>& rhos, std::size_t dim,
                                    const std::vector<std::uint64_t>& seeds,
                                    const MiBenchOptions& options = {});

/// Header "rho,d,analytic,infonce,club", one line per row.
std::string mibench_csv(const std::vector<MiBenchRow>& rows);

}  // namespace fsca
