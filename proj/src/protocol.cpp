#include "fsca/protocol.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <set>

#include "fsca/errors.hpp"
#include "fsca/mibounds.hpp"
#include "fsca/ops.hpp"

namespace fsca {

FeatureKind parse_feature_kind(const std::string& name) {
  if (name == "base") return FeatureKind::base;
  if (name == "di") return FeatureKind::di;
  if (name == "ds") return FeatureKind::ds;
  throw InputError("unknown feature tag '" + name + "' (expected base, di or ds)");
}

FeatureTable extract_features(const NetParams& params,
                              const std::vector<const LabeledSample*>& samples, FeatureKind kind) {
  FeatureTable table;
  table.ids.resize(samples.size());
  table.domains.resize(samples.size());
  table.rows.resize(samples.size());
  NoGradScope no_grad(params.parameters());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(samples.size()); ++i) {
    const LabeledSample& s = *samples[i];
    const Tensor f_base = backbone_forward(params, s.image);
    Tensor pooled;
    switch (kind) {
      case FeatureKind::base: pooled = mean_spatial(f_base); break;
      case FeatureKind::di: pooled = embed_latent(separate(params, f_base).di, params.embed_di); break;
      case FeatureKind::ds: pooled = embed_latent(separate(params, f_base).ds, params.embed_ds); break;
    }
    table.ids[i] = s.id;
    table.domains[i] = s.domain;
    const auto v = pooled.data();
    table.rows[i].assign(v.begin(), v.end());
  }
  return table;
}

void export_features(const NetParams& params, const std::vector<const LabeledSample*>& samples,
                     FeatureKind kind, const std::filesystem::path& out) {
  write_feature_csv(out, extract_features(params, samples, kind));
}

TraceWindow trace_window(const std::vector<StepRecord>& trace, double StepRecord::*field,
                         double fraction) {
  if (trace.empty()) throw ContractError("trace_window: empty trace");
  const std::size_t n = std::max<std::size_t>(
      1, static_cast<std::size_t>(fraction * static_cast<double>(trace.size())));
  TraceWindow w;
  for (std::size_t i = 0; i < n; ++i) {
    w.first += trace[i].*field;
    w.last += trace[trace.size() - n + i].*field;
  }
  w.first /= static_cast<double>(n);
  w.last /= static_cast<double>(n);
  return w;
}

const ReportCell& find_cell(const std::vector<ReportCell>& cells, const std::string& mode,
                            int eval_domain) {
  for (const auto& c : cells) {
    if (c.mode == mode && c.eval_domain == eval_domain) return c;
  }
  throw ContractError("report has no cell for mode " + mode + ", domain " +
                      std::to_string(eval_domain));
}

namespace {

Json cells_json(const std::vector<ReportCell>& cells) {
  Json arr = Json::array();
  for (const auto& c : cells) {
    Json j;
    j["mode"] = c.mode;
    j["train_domains"] = c.train_domains;
    j["eval_domain"] = c.eval_domain;
    j["mae"] = c.mae;
    j["mse"] = c.mse;
    j["seed_mae"] = c.seed_mae;
    j["seed_mse"] = c.seed_mse;
    arr.push_back(std::move(j));
  }
  return arr;
}

Json window_json(const TraceWindow& w) { return {{"first_10pct", w.first}, {"last_10pct", w.last}}; }

// Accumulates per-seed errors into cells keyed by (mode, train set, eval domain).
class CellTable {
 public:
  void add(const std::string& mode, const std::vector<int>& train, int eval, const CountErrors& e) {
    for (auto& c : cells_) {
      if (c.mode == mode && c.train_domains == train && c.eval_domain == eval) {
        push(c, e);
        return;
      }
    }
    ReportCell c;
    c.mode = mode;
    c.train_domains = train;
    c.eval_domain = eval;
    push(c, e);
    cells_.push_back(std::move(c));
  }

  std::vector<ReportCell> finish() {
    for (auto& c : cells_) {
      const double n = static_cast<double>(c.seed_mae.size());
      c.mae = std::accumulate(c.seed_mae.begin(), c.seed_mae.end(), 0.0) / n;
      c.mse = std::accumulate(c.seed_mse.begin(), c.seed_mse.end(), 0.0) / n;
      if (c.mae > c.mse) throw ContractError("report cell violates MAE <= MSE");
    }
    return std::move(cells_);
  }

 private:
  static void push(ReportCell& c, const CountErrors& e) {
    if (e.mae > e.mse) throw ContractError("per-seed errors violate MAE <= MSE");
    c.seed_mae.push_back(e.mae);
    c.seed_mse.push_back(e.mse);
  }
  std::vector<ReportCell> cells_;
};

CountErrors evaluate(const NetParams& params, const DomainData& d, TrainMode mode,
                     const Batch& partner_pool = {}, std::size_t partners_per_sample = 0) {
  std::vector<double> truth;
  truth.reserve(d.test.size());
  for (const auto& s : d.test) truth.push_back(s.count);
  return eval_mae_mse(predict_counts(params, d.test, mode, partner_pool, partners_per_sample), truth);
}

// Training samples of every domain other than `self`, in domain order.
Batch partner_pool(const std::vector<DomainData>& domains, int self) {
  Batch pool;
  for (const auto& d : domains) {
    if (d.domain == self) continue;
    for (const auto& s : d.train) pool.push_back(&s);
  }
  return pool;
}

void require_splits(const DomainData& d) {
  if (d.train.empty() || d.test.empty()) {
    throw ConfigError("protocol: domain " + std::to_string(d.domain) + " needs train and test scenes");
  }
}

}  // namespace

Json ProtocolReport::to_json(bool include_timing) const {
  Json j;
  j["protocol"] = protocol;
  j["config_hash"] = config_hash;
  j["seeds"] = seeds;
  j["metrics"] = "MAE = mean |error|; MSE = sqrt(mean error^2); per-seed values averaged";
  j["table1"] = cells_json(table1);
  j["table1_cross"] = cells_json(table1_cross);
  j["generalization"] = cells_json(generalization);
  Json tr = Json::array();
  for (const auto& t : traces) {
    tr.push_back({{"mode", t.mode},
                  {"seed", t.seed},
                  {"l_counter", window_json(t.l_counter)},
                  {"i_lb", window_json(t.i_lb)},
                  {"i_club", window_json(t.i_club)}});
  }
  j["traces"] = std::move(tr);
  if (include_timing) j["wall_clock_seconds"] = wall_clock_seconds;
  return j;
}

ProtocolRun run_protocol(const std::vector<DomainData>& domains, const ProtocolConfig& cfg,
                         const ProgressFn& progress) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  auto say = [&](const std::string& msg) {
    if (progress) progress(msg);
  };
  const bool do_table1 = cfg.protocol != ProtocolKind::generalization;
  const bool do_gen = cfg.protocol != ProtocolKind::table1;

  ProtocolRun run;
  ProtocolReport& report = run.report;
  report.protocol = protocol_kind_name(cfg.protocol);
  report.config_hash = config_hash(protocol_config_to_json(cfg));
  report.seeds = cfg.seeds;

  auto summarize = [&](const std::string& mode, std::uint64_t seed, const TrainResult& r) {
    report.traces.push_back({mode, seed, trace_window(r.trace, &StepRecord::l_counter),
                             trace_window(r.trace, &StepRecord::i_lb),
                             trace_window(r.trace, &StepRecord::i_club)});
  };

  if (do_table1) {
    if (domains.size() < cfg.table1_domains) throw ConfigError("protocol: not enough domains for table1");
    const std::vector<DomainData> used(domains.begin(), domains.begin() + static_cast<std::ptrdiff_t>(cfg.table1_domains));
    std::vector<int> ids;
    for (const auto& d : used) {
      require_splits(d);
      ids.push_back(d.domain);
    }
    CellTable in_domain, cross;
    for (const auto seed : cfg.seeds) {
      TrainConfig tc = cfg.train;
      tc.seed = seed;
      for (const auto& d : used) {
        say("table1 seed " + std::to_string(seed) + ": single on domain " + std::to_string(d.domain));
        const TrainResult r = train_run({d}, tc, TrainMode::single);
        summarize("single", seed, r);
        for (const auto& e : used) {
          (e.domain == d.domain ? in_domain : cross)
              .add("single", {d.domain}, e.domain, evaluate(r.params, e, TrainMode::single));
        }
      }
      for (const TrainMode mode : {TrainMode::joint_naive, TrainMode::joint_fsca}) {
        say("table1 seed " + std::to_string(seed) + ": " + train_mode_name(mode));
        TrainResult r = train_run(used, tc, mode);
        summarize(train_mode_name(mode), seed, r);
        for (const auto& e : used) {
          if (mode == TrainMode::joint_fsca) {
            in_domain.add("joint_fsca", ids, e.domain,
                          evaluate(r.params, e, mode, partner_pool(used, e.domain),
                                   cfg.eval_partners));
            in_domain.add("joint_fsca_skip", ids, e.domain, evaluate(r.params, e, mode));
          } else {
            in_domain.add(train_mode_name(mode), ids, e.domain, evaluate(r.params, e, mode));
          }
        }
        if (mode == TrainMode::joint_fsca) run.table1_fsca.push_back(std::move(r));
      }
    }
    report.table1 = in_domain.finish();
    report.table1_cross = cross.finish();
  }

  if (do_gen) {
    const std::set<int> sources(cfg.generalization_sources.begin(), cfg.generalization_sources.end());
    std::vector<DomainData> train_set, held_out;
    for (const auto& d : domains) {
      (sources.contains(d.domain) ? train_set : held_out).push_back(d);
    }
    for (const auto& d : train_set) require_splits(d);
    for (const auto& d : held_out) require_splits(d);
    std::vector<int> ids;
    for (const auto& d : train_set) ids.push_back(d.domain);
    CellTable gen;
    for (const auto seed : cfg.seeds) {
      TrainConfig tc = cfg.train;
      tc.seed = seed;
      for (const TrainMode mode : {TrainMode::joint_naive, TrainMode::joint_fsca}) {
        say("generalization seed " + std::to_string(seed) + ": " + train_mode_name(mode));
        const TrainResult r = train_run(train_set, tc, mode);
        summarize(std::string("generalization/") + train_mode_name(mode), seed, r);
        for (const auto& e : held_out) gen.add(train_mode_name(mode), ids, e.domain, evaluate(r.params, e, mode));
      }
    }
    report.generalization = gen.finish();
  }

  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return run;
}

}  // namespace fsca
