#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "fsca/config.hpp"
#include "fsca/metrics.hpp"
#include "fsca/trainer.hpp"
#include "fsca/xattn.hpp"

namespace fsca {

/// "base", "di" or "ds"; InputError otherwise.
FeatureKind parse_feature_kind(const std::string& name);

/// Global-average-pooled features per sample: f_base directly, DI and DS
/// through their latent embeddings.
FeatureTable extract_features(const NetParams& params, const std::vector<const LabeledSample*>& samples,
                              FeatureKind kind);
void export_features(const NetParams& params, const std::vector<const LabeledSample*>& samples,
                     FeatureKind kind, const std::filesystem::path& out);

/// Mean of a trace field over the first and the last `fraction` of steps.
struct TraceWindow {
  double first = 0.0;
  double last = 0.0;
};
TraceWindow trace_window(const std::vector<StepRecord>& trace, double StepRecord::*field,
                         double fraction = 0.1);

struct ReportCell {
  // single, joint_naive, joint_fsca (attending to partners from the other
  // training domains) or joint_fsca_skip (attention skipped)
  std::string mode;
  std::vector<int> train_domains;
  int eval_domain = 0;
  double mae = 0.0;  // averaged over seeds
  double mse = 0.0;
  std::vector<double> seed_mae;
  std::vector<double> seed_mse;
};

struct TraceSummary {
  std::string mode;
  std::uint64_t seed = 0;
  TraceWindow l_counter, i_lb, i_club;
};

struct ProtocolReport {
  std::string protocol;
  std::string config_hash;
  std::vector<std::uint64_t> seeds;
  std::vector<ReportCell> table1;          // in-domain single plus both joint modes
  std::vector<ReportCell> table1_cross;    // single models on the other domains
  std::vector<ReportCell> generalization;  // trained on sources, evaluated on held-out domains
  std::vector<TraceSummary> traces;
  double wall_clock_seconds = 0.0;

  /// Fixed key order; wall-clock omitted when `include_timing` is false.
  Json to_json(bool include_timing = true) const;
};

struct ProtocolRun {
  ProtocolReport report;
  std::vector<TrainResult> table1_fsca;  // one per seed, kept for probes and traces
};

/// Progress messages, e.g. to stderr. May be empty.
using ProgressFn = std::function<void(const std::string&)>;

/// Runs table1, generalization or both on prepared domain data (ordered as in
/// cfg.data.domains). Throws ConfigError for too few domains or empty splits.
ProtocolRun run_protocol(const std::vector<DomainData>& domains, const ProtocolConfig& cfg,
                         const ProgressFn& progress = {});

/// Cell lookup helper; throws ContractError if absent.
const ReportCell& find_cell(const std::vector<ReportCell>& cells, const std::string& mode,
                            int eval_domain);

}  // namespace fsca
