#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fsca/dataset_io.hpp"
#include "fsca/mibounds.hpp"
#include "fsca/netblocks.hpp"
#include "fsca/optim.hpp"

namespace fsca {

/// Which latents the CLUB term compares: target DS vs partner DS, or the
/// target's own DS vs DI.
enum class ClubPairing { ds_ds, ds_di };
enum class TrainMode { single, joint_naive, joint_fsca };
/// How target and partner samples are matched into MI pairs: by batch
/// position as drawn, or after sorting both batches by ground-truth count.
enum class MiPairing { position, count };

const char* club_pairing_name(ClubPairing p);
ClubPairing parse_club_pairing(const std::string& s);
const char* train_mode_name(TrainMode m);
const char* mi_pairing_name(MiPairing p);
MiPairing parse_mi_pairing(const std::string& s);
TrainMode parse_train_mode(const std::string& s);

struct TrainConfig {
  double beta1 = 0.1;   // weight of both MI terms
  double beta2 = 0.01;  // weight of the q likelihood term
  std::size_t steps = 500;
  std::size_t batch_size = 4;
  double lr_main = 1e-3;
  double lr_q = 1e-3;
  std::uint64_t seed = 1;
  NetConfig net;
  ClubPairing club_pairing = ClubPairing::ds_ds;
  MiPairing mi_pairing = MiPairing::position;
  double tau = 0.1;
  std::size_t q_steps = 1;  // q updates per outer step
  double gt_sigma = 2.0;    // px, ground-truth kernel width
  std::size_t density_stride = 4;

  void validate() const;
};

struct StepRecord {
  std::size_t step = 0;
  double l_counter = 0.0;
  double i_lb = 0.0;
  double i_club = 0.0;
  double l_delta2 = 0.0;
  double total = 0.0;
  int target_domain = -1;
  int partner_domain = -1;  // -1 when the step had no partner

  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

/// A scene prepared for the network: image tensor and ground-truth density
/// sum-pooled to the counter's output stride.
struct LabeledSample {
  std::string id;
  int domain = 0;
  Tensor image;    // 1×H×W
  Tensor density;  // 1×H/s×W/s
  double count = 0.0;
};

LabeledSample make_labeled_sample(const Scene& scene, const std::string& id, double gt_sigma,
                                  std::size_t stride);

struct DomainData {
  int domain = 0;
  std::vector<LabeledSample> train;
  std::vector<LabeledSample> test;
};

/// Groups a dataset by domain id (ascending) and split.
std::vector<DomainData> prepare_domains(const Dataset& dataset, double gt_sigma,
                                        std::size_t stride);

/// Pixelwise mean squared error between density maps.
Tensor counting_loss(const Tensor& predicted, const Tensor& ground_truth);

/// L = L_counter − β₁·I_LB + β₁·Î_CLUB + β₂·L_Δ2. Throws NumericError naming
/// the first non-finite component.
double total_loss(double l_counter, double i_lb, double i_club, double l_delta2,
                  const TrainConfig& cfg);

using Batch = std::vector<const LabeledSample*>;

/// Density for one image. joint_naive uses the naive path; the other modes
/// use the separated path with attention skipped.
Tensor predict_density(const NetParams& params, const Tensor& image, TrainMode mode);
/// Separated path with cross-attention to each partner in turn; the densities
/// are averaged.
Tensor predict_density_attended(const NetParams& params, const Tensor& image,
                                const Batch& partners);

/// Counts for every sample. With a non-empty partner pool (joint_fsca only),
/// sample i attends to pool entries (i·k + j) mod |pool| for j < k.
std::vector<double> predict_counts(const NetParams& params,
                                   const std::vector<LabeledSample>& samples, TrainMode mode,
                                   const Batch& partner_pool = {},
                                   std::size_t partners_per_sample = 4);

/// Owns the network, the variational q and both optimiser states.
class Trainer {
 public:
  explicit Trainer(TrainConfig cfg);

  /// Alternating FSCA step on index-aligned target/partner batches from two
  /// distinct domains. Phase 1 fits q on detached latents; phase 2 updates the
  /// main network on the composite loss with q frozen.
  StepRecord train_step(const Batch& target, const Batch& partner);

  /// Counting-loss-only step, for single-domain and naive joint training.
  StepRecord supervised_step(const Batch& batch, TrainMode mode);

  const NetParams& params() const { return params_; }
  const VariationalQ& q() const { return q_; }
  const TrainConfig& config() const { return cfg_; }
  std::size_t steps_taken() const { return step_; }

  /// Network and q parameters, for checkpoints.
  NamedTensors checkpoint_tensors() const;

 private:
  TrainConfig cfg_;
  NetParams params_;
  VariationalQ q_;
  std::vector<Tensor> main_params_;
  std::vector<Tensor> q_params_;
  OptimizerState opt_main_;
  OptimizerState opt_q_;
  std::size_t step_ = 0;
};

struct TrainResult {
  NetParams params;
  VariationalQ q;
  std::vector<StepRecord> trace;
  NamedTensors checkpoint;
};

/// single: first domain only, separated path without attention.
/// joint_naive: batches pooled over all domains, naive path.
/// joint_fsca: round-robin target domain, uniformly drawn distinct partner.
TrainResult train_run(const std::vector<DomainData>& domains, const TrainConfig& cfg,
                      TrainMode mode);

/// Temporarily turns off gradient recording for a set of leaves.
class NoGradScope {
 public:
  explicit NoGradScope(std::vector<Tensor> leaves);
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  std::vector<Tensor> leaves_;
  std::vector<bool> previous_;
};

}  // namespace fsca
