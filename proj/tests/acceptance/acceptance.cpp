// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cli.hpp"
#include "fsca/complexity.hpp"
#include "fsca/config.hpp"
#include "fsca/dataset_io.hpp"
#include "fsca/gradcheck.hpp"
#include "fsca/mibench.hpp"
#include "fsca/mibounds.hpp"
#include "fsca/netblocks.hpp"
#include "fsca/ops.hpp"
#include "fsca/protocol.hpp"
#include "fsca/synth.hpp"
#include "fsca/xattn.hpp"

namespace fs = std::filesystem;
using namespace fsca;

namespace {

// Tolerances and budgets of the exit gate.
constexpr double kGradTol = 1e-4;
constexpr std::size_t kGradCases = 100;
constexpr double kGradBudgetS = 120.0;

constexpr double kMiRho = 0.8;
constexpr std::size_t kMiDim = 4;
constexpr std::size_t kMiSeeds = 5;
constexpr double kClubRelTol = 0.15;
constexpr double kClubSlack = 0.15;
constexpr double kInfoNceAbove = 0.1;
constexpr double kInfoNceBelow = 0.5;
constexpr std::size_t kIndependentTrials = 20;
constexpr double kIndependentSe = 3.0;
constexpr double kMiBudgetS = 300.0;

constexpr double kRowSumTol = 1e-6;
constexpr double kMassTol = 1e-6;
constexpr std::uint64_t kFullCounterParams = 1476097;

constexpr std::size_t kMaxSteps = 2000;
constexpr double kProtocolBudgetS = 900.0;
constexpr double kProbeGap = 0.10;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct Verdict {
  bool pass = true;
  std::vector<std::string> notes;

  void check(bool ok, const std::string& what) {
    if (!ok) pass = false;
    notes.push_back(std::string(ok ? "ok " : "FAILED ") + what);
  }
};

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double stderr_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double ss = 0.0;
  for (const double x : v) ss += (x - m) * (x - m);
  const double n = static_cast<double>(v.size());
  return std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
}

struct Context {
  ProtocolConfig cfg;
  std::vector<DomainData> domains;
  std::optional<ProtocolRun> run;
  double protocol_seconds = 0.0;
  fs::path workdir;

  ProtocolRun& protocol() {
    if (!run) {
      const auto t0 = Clock::now();
      const DataConfig& d = cfg.data;
      domains = prepare_domains(generate_dataset(d.domains, d.seed, d.train_per_domain,
                                                 d.test_per_domain, d.height, d.width),
                                cfg.train.gt_sigma, cfg.train.density_stride);
      run = run_protocol(domains, cfg, [](const std::string& m) { std::cerr << "  .. " << m << "\n"; });
      protocol_seconds = seconds_since(t0);
    }
    return *run;
  }
};

// 1. gradients of every op and of the composed objective
Verdict criterion1(Context&) {
  Verdict v;
  const auto t0 = Clock::now();
  GradSuiteOptions opt;
  opt.cases_per_op = kGradCases;
  opt.composed_cases = kGradCases;
  double worst = 0.0;
  std::string worst_name;
  for (const auto& r : run_gradcheck_suite(opt)) {
    v.check(r.elements > 0 && r.max_rel_error < kGradTol && r.cases >= kGradCases,
            r.name + " max rel err " + fmt("%.2e", r.max_rel_error) + " over " +
                std::to_string(r.elements) + " elements");
    if (r.max_rel_error > worst) {
      worst = r.max_rel_error;
      worst_name = r.name;
    }
  }
  const double secs = seconds_since(t0);
  v.check(secs < kGradBudgetS, "runtime " + fmt("%.1f s", secs));
  v.notes.push_back("worst " + worst_name + " " + fmt("%.2e", worst));
  return v;
}

// 2. Gaussian MI oracle
Verdict criterion2(Context&) {
  Verdict v;
  const auto t0 = Clock::now();
  std::vector<std::uint64_t> seeds(kMiSeeds);
  std::iota(seeds.begin(), seeds.end(), 1);
  const MiBenchRow row = run_mibench({kMiRho}, kMiDim, seeds).front();
  const double a = row.analytic;
  v.check(std::abs(row.club - a) <= kClubRelTol * a,
          "CLUB " + fmt("%.3f", row.club) + " within 15% of " + fmt("%.3f", a));
  v.check(row.club >= a - kClubSlack, "CLUB " + fmt("%.3f", row.club) + " >= analytic - 0.15");
  v.check(row.infonce <= a + kInfoNceAbove && row.infonce >= a - kInfoNceBelow,
          "InfoNCE " + fmt("%.3f", row.infonce) + " in [analytic - 0.5, analytic + 0.1]");

  std::vector<double> nce, club;
  for (std::size_t t = 0; t < kIndependentTrials; ++t) {
    const MiEstimate e = estimate_gaussian_mi(0.0, kMiDim, 1000 + t);
    nce.push_back(e.infonce);
    club.push_back(e.club);
  }
  for (const auto& [name, xs] : {std::pair{"InfoNCE", nce}, std::pair{"CLUB", club}}) {
    const double m = mean_of(xs), se = stderr_of(xs);
    v.check(std::abs(m) <= kIndependentSe * se,
            std::string(name) + " on independent pairs " + fmt("%.4f", m) + " (3 SE = " +
                fmt("%.4f", kIndependentSe * se) + ")");
  }
  const double secs = seconds_since(t0);
  v.check(secs < kMiBudgetS, "runtime " + fmt("%.1f s", secs));
  return v;
}

// 3. exact identities
Verdict criterion3(Context& ctx) {
  Verdict v;
  Rng rng(77);
  auto randn = [&](Shape s, double sc = 1.0) {
    std::vector<double> d(shape_numel(s));
    for (auto& x : d) x = sc * rng.normal();
    return Tensor::from_data(std::move(s), std::move(d));
  };

  bool club_zero = true;
  for (std::uint64_t s = 0; s < 20; ++s) {
    VariationalQ q = init_variational_q(4, s);
    for (auto& x : q.hidden.weight.mutable_data()) x = 0.0;
    const LatentPair p{randn({16, 4}), randn({16, 4})};
    club_zero = club_zero && club_upper_bound(p, q).item() == 0.0;
  }
  v.check(club_zero, "CLUB == 0 exactly for z-independent q (20 batches)");

  bool fuse_ok = true;
  double worst_row = 0.0;
  for (int t = 0; t < 20; ++t) {
    TokenGrid orig{randn({12, 5}), 3, 4, FeatureKind::di};
    TokenGrid zero{Tensor::zeros({12, 5}), 3, 4, FeatureKind::di};
    const TokenGrid fused = fuse_residual(orig, zero);
    fuse_ok = fuse_ok && std::equal(fused.tokens.data().begin(), fused.tokens.data().end(),
                                    orig.tokens.data().begin());
    const Tensor w = attention_weights(randn({12, 5}, 3.0), randn({9, 5}, 3.0));
    for (std::size_t i = 0; i < 12; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < 9; ++j) s += w[i * 9 + j];
      worst_row = std::max(worst_row, std::abs(s - 1.0));
    }
  }
  v.check(fuse_ok, "fuse_residual(original, 0) == original");
  v.check(worst_row <= kRowSumTol, "attention rows sum to 1, worst deviation " + fmt("%.1e", worst_row));

  double worst_mass = 0.0;
  auto track = [&](const std::vector<Point>& pts, std::size_t h, std::size_t w, double sigma) {
    const DensityMap d = render_density_gt(pts, sigma, h, w);
    const double n = static_cast<double>(pts.size());
    worst_mass = std::max(worst_mass, std::abs(d.total() - n));
    const Tensor pooled = sum_pool2d(Tensor::from_data({1, h, w}, d.grid), 4);
    worst_mass = std::max(worst_mass, std::abs(sum(pooled).item() - n));
  };
  track({{0, 0}, {63.999, 0}, {0, 63.999}, {63.999, 63.999}, {0.5, 31}, {31, 63.5}}, 64, 64, 3.0);
  for (const auto& spec : default_domains()) {
    for (std::uint64_t s = 0; s < 50; ++s) {
      const Scene sc = gen_scene(spec, s);
      track(sc.points, sc.height, sc.width, 2.0);
    }
  }
  v.check(worst_mass <= kMassTol, "density mass == point count (borders, pooled), worst " + fmt("%.1e", worst_mass));

  const ProtocolReport& rep = ctx.protocol().report;
  std::size_t cells = 0;
  bool jensen = true;
  for (const auto* list : {&rep.table1, &rep.table1_cross, &rep.generalization}) {
    for (const auto& c : *list) {
      ++cells;
      jensen = jensen && c.mae <= c.mse + 1e-12;
      for (std::size_t i = 0; i < c.seed_mae.size(); ++i) {
        jensen = jensen && c.seed_mae[i] <= c.seed_mse[i] + 1e-12;
      }
    }
  }
  v.check(jensen && cells > 0, "MAE <= MSE on all " + std::to_string(cells) + " report cells");

  const auto counter = count_params_flops(full_counter_layers(128, 128));
  v.check(counter.total_params == kFullCounterParams,
          "full-size counter params " + std::to_string(counter.total_params));
  return v;
}

// 4. negative transfer and its mitigation
Verdict criterion4(Context& ctx) {
  Verdict v;
  const ProtocolReport& rep = ctx.protocol().report;
  v.check(ctx.cfg.train.steps <= kMaxSteps, "steps " + std::to_string(ctx.cfg.train.steps) + " <= 2000");
  v.check(ctx.cfg.seeds.size() == 3, std::to_string(ctx.cfg.seeds.size()) + " seeds");
  bool negative_transfer = false;
  bool mitigated = true;
  for (std::size_t k = 0; k < ctx.cfg.table1_domains; ++k) {
    const int d = ctx.domains[k].domain;
    const double single = find_cell(rep.table1, "single", d).mae;
    const double naive = find_cell(rep.table1, "joint_naive", d).mae;
    const double fsca = find_cell(rep.table1, "joint_fsca", d).mae;
    negative_transfer = negative_transfer || naive > single;
    mitigated = mitigated && fsca <= naive;
    v.notes.push_back("domain " + std::to_string(d) + ": single " + fmt("%.3f", single) + ", joint_naive " +
                      fmt("%.3f", naive) + ", joint_fsca " + fmt("%.3f", fsca));
  }
  v.check(negative_transfer, "joint_naive MAE > single MAE on some domain");
  v.check(mitigated, "joint_fsca MAE <= joint_naive MAE on every domain");
  v.check(ctx.protocol_seconds < kProtocolBudgetS, "runtime " + fmt("%.1f s", ctx.protocol_seconds));
  return v;
}

// 5. DS latents carry more domain identity than DI latents
Verdict criterion5(Context& ctx) {
  Verdict v;
  ProtocolRun& run = ctx.protocol();
  std::vector<const LabeledSample*> samples;
  for (std::size_t k = 0; k < ctx.cfg.table1_domains; ++k) {
    for (const auto& s : ctx.domains[k].train) samples.push_back(&s);
    for (const auto& s : ctx.domains[k].test) samples.push_back(&s);
  }
  std::vector<double> di, ds;
  for (std::size_t i = 0; i < run.table1_fsca.size(); ++i) {
    const NetParams& p = run.table1_fsca[i].params;
    di.push_back(domain_probe(extract_features(p, samples, FeatureKind::di), {.seed = ctx.cfg.seeds[i]}));
    ds.push_back(domain_probe(extract_features(p, samples, FeatureKind::ds), {.seed = ctx.cfg.seeds[i]}));
    v.notes.push_back("seed " + std::to_string(ctx.cfg.seeds[i]) + ": DS " + fmt("%.3f", ds.back()) +
                      ", DI " + fmt("%.3f", di.back()));
  }
  const double gap = mean_of(ds) - mean_of(di);
  v.check(gap >= kProbeGap, "mean DS - DI probe accuracy " + fmt("%+.3f", gap) + " >= 0.10");
  return v;
}

// 6. MI trends over joint_fsca traces
Verdict criterion6(Context& ctx) {
  Verdict v;
  const ProtocolReport& rep = ctx.protocol().report;
  std::size_t seen = 0;
  for (const auto& t : rep.traces) {
    if (t.mode != "joint_fsca") continue;
    ++seen;
    const std::string s = "seed " + std::to_string(t.seed) + ": ";
    v.check(t.i_lb.last > t.i_lb.first,
            s + "I_LB " + fmt("%.4f", t.i_lb.first) + " -> " + fmt("%.4f", t.i_lb.last));
    v.check(t.i_club.last < t.i_club.first,
            s + "CLUB " + fmt("%.4f", t.i_club.first) + " -> " + fmt("%.4f", t.i_club.last));
  }
  v.check(seen > 0, std::to_string(seen) + " joint_fsca traces");

  // Diagnostic only: a q whose hidden ReLUs are all inactive ignores z, and
  // then CLUB is 0 by cancellation whatever the latents do.
  ProtocolRun& run = ctx.protocol();
  for (std::size_t i = 0; i < run.table1_fsca.size(); ++i) {
    const TrainResult& r = run.table1_fsca[i];
    std::vector<Tensor> ds;
    for (std::size_t k = 0; k < ctx.cfg.table1_domains; ++k) {
      for (const auto& s : ctx.domains[k].train) {
        ds.push_back(separate(r.params, backbone_forward(r.params, s.image)).ds);
      }
    }
    const Tensor h = relu(linear_forward(r.q.hidden, embed_latents(ds, r.params.embed_ds)));
    std::size_t active = 0;
    for (const double x : h.data()) active += x > 0.0;
    v.notes.push_back("seed " + std::to_string(ctx.cfg.seeds[i]) + ": q hidden units active on " +
                      fmt("%.1f%%", 100.0 * static_cast<double>(active) / static_cast<double>(h.numel())) +
                      " of (sample, unit) entries" +
                      (active == 0 ? "; q ignores z, so CLUB is 0 by cancellation" : ""));
  }
  return v;
}

// 7. determinism and file formats, driven through the command line
Verdict criterion7(Context& ctx) {
  Verdict v;
  const fs::path dir = ctx.workdir / "c7";
  fs::remove_all(dir);
  fs::create_directories(dir);

  ProtocolConfig small = ctx.cfg;
  small.data.train_per_domain = 12;
  small.data.test_per_domain = 4;
  small.train.steps = 20;
  const fs::path cfg_path = dir / "config.json";
  std::ofstream(cfg_path) << protocol_config_to_json(small).dump(2) << "\n";

  std::ostringstream sink;
  auto cli = [&](std::vector<std::string> args) {
    args.insert(args.begin() + 1, {"--config", cfg_path.string()});
    return run_cli(args, sink, sink);
  };
  const std::string data = (dir / "data").string();
  v.check(cli({"gen", "--out", data}) == 0, "gen");

  for (const char* tag : {"a", "b"}) {
    const std::string t(tag);
    cli({"train", "--data", data, "--mode", "joint_fsca", "--out", (dir / (t + ".ckpt")).string(), "--trace",
         (dir / (t + ".jsonl")).string()});
    cli({"export-features", "--data", data, "--checkpoint", (dir / (t + ".ckpt")).string(), "--kind", "ds",
         "--out", (dir / (t + ".csv")).string()});
  }
  for (const char* ext : {".ckpt", ".jsonl", ".csv"}) {
    const std::string a = file_bytes(dir / (std::string("a") + ext));
    const std::string b = file_bytes(dir / (std::string("b") + ext));
    v.check(!a.empty() && a == b, std::string(ext + 1) + " identical across runs (" + std::to_string(a.size()) + " bytes)");
  }

  const Dataset first = read_dataset(data);
  const fs::path copy = dir / "copy";
  write_dataset(copy, first.scenes, first.manifest);
  bool same = file_bytes(fs::path(data) / "manifest.json") == file_bytes(copy / "manifest.json");
  for (const auto& e : first.manifest.samples) {
    same = same && file_bytes(fs::path(data) / (e.id + ".img")) == file_bytes(copy / (e.id + ".img"));
    same = same && file_bytes(fs::path(data) / (e.id + ".points.json")) == file_bytes(copy / (e.id + ".points.json"));
  }
  v.check(same, "dataset write -> read -> write is bitwise identical (" +
                    std::to_string(first.manifest.samples.size()) + " samples)");

  {
    std::fstream f(dir / "a.ckpt", std::ios::binary | std::ios::in | std::ios::out);
    f.write("XXXXXXXX", 8);
  }
  v.check(cli({"eval", "--data", data, "--checkpoint", (dir / "a.ckpt").string()}) == 2,
          "corrupt checkpoint magic -> exit 2");
  {
    const fs::path img = fs::path(data) / (first.manifest.samples.front().id + ".img");
    std::fstream f(img, std::ios::binary | std::ios::in | std::ios::out);
    f.write("XXXX", 4);
  }
  v.check(cli({"eval", "--data", data, "--checkpoint", (dir / "b.ckpt").string()}) == 2,
          "corrupt image magic -> exit 2");
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FSCA acceptance run"};
  std::string config_path;
  std::vector<int> only;
  std::string workdir = (fs::temp_directory_path() / "fsca_acceptance").string();
  app.add_option("--config", config_path, "protocol config JSON")->required();
  app.add_option("--only", only, "criteria to run (default: all)");
  app.add_option("--workdir", workdir, "scratch directory");
  CLI11_PARSE(app, argc, argv);

  Context ctx;
  ctx.cfg = protocol_config_from_json(load_json_file(config_path));
  ctx.workdir = workdir;
  fs::create_directories(ctx.workdir);
  std::cout << "config " << config_path << " hash " << config_hash(protocol_config_to_json(ctx.cfg)) << "\n";

  const std::vector<std::pair<int, std::function<Verdict(Context&)>>> criteria = {
      {1, criterion1}, {2, criterion2}, {3, criterion3}, {4, criterion4},
      {5, criterion5}, {6, criterion6}, {7, criterion7}};
  const std::set<int> wanted(only.begin(), only.end());
  bool all = true;
  for (const auto& [id, fn] : criteria) {
    if (!wanted.empty() && !wanted.contains(id)) continue;
    const auto t0 = Clock::now();
    Verdict v;
    try {
      v = fn(ctx);
    } catch (const std::exception& e) {
      v.check(false, std::string("threw: ") + e.what());
    }
    all = all && v.pass;
    for (const auto& n : v.notes) std::cout << "    " << n << "\n";
    std::cout << "criterion " << id << ": " << (v.pass ? "PASS" : "FAIL") << " ("
              << fmt("%.1f s", seconds_since(t0)) << ")" << std::endl;
  }
  return all ? 0 : 1;
}
