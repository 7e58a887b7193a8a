#include "cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fsca/complexity.hpp"
#include "fsca/config.hpp"
#include "fsca/errors.hpp"
#include "fsca/gradcheck.hpp"
#include "fsca/metrics.hpp"
#include "fsca/mibench.hpp"
#include "fsca/protocol.hpp"

namespace fsca {

namespace {

namespace fs = std::filesystem;

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;

  ProtocolConfig load() const {
    Json doc = config_path.empty() ? Json::object() : load_json_file(config_path);
    for (const auto& o : overrides) apply_override(doc, o);
    return protocol_config_from_json(doc);
  }
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "JSON config (data, train, protocol fields)");
  cmd->add_option("--set", c.overrides, "override a config field, e.g. train.steps=300");
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError(path.string(), "cannot open for writing");
  f << text;
  if (!f) throw FormatError(path.string(), "write failed");
}

Json step_json(const StepRecord& r) {
  Json j;
  j["step"] = r.step;
  j["l_counter"] = r.l_counter;
  j["i_lb"] = r.i_lb;
  j["i_club"] = r.i_club;
  j["l_delta2"] = r.l_delta2;
  j["total"] = r.total;
  j["target_domain"] = r.target_domain;
  j["partner_domain"] = r.partner_domain;
  return j;
}

std::vector<DomainData> load_domains(const std::string& dir, const ProtocolConfig& cfg) {
  return prepare_domains(read_dataset(dir), cfg.train.gt_sigma, cfg.train.density_stride);
}

// Domains selected by id, in the order given; all of them when `ids` is empty.
std::vector<DomainData> select(const std::vector<DomainData>& all, const std::vector<int>& ids) {
  if (ids.empty()) return all;
  std::vector<DomainData> out;
  for (const int id : ids) {
    bool found = false;
    for (const auto& d : all) {
      if (d.domain == id) {
        out.push_back(d);
        found = true;
      }
    }
    if (!found) throw ConfigError("dataset has no domain " + std::to_string(id));
  }
  return out;
}

NetParams load_network(const std::string& checkpoint, const ProtocolConfig& cfg) {
  NetParams params = init_net_params(cfg.train.net, cfg.train.seed);
  assign_parameters(params.named_parameters(), load_checkpoint(checkpoint), checkpoint);
  return params;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Feature separation and cross-attention crowd counting at desk scale", "fsca"};
  app.require_subcommand(1);
  app.fallthrough(false);

  Common common;

  // gen
  std::string gen_out;
  auto* gen = app.add_subcommand("gen", "generate a synthetic multi-domain dataset");
  add_common(gen, common);
  gen->add_option("--out", gen_out, "output directory")->required();

  // train
  std::string train_data, train_out, train_trace, train_mode = "joint_fsca";
  std::vector<int> train_domains;
  auto* train = app.add_subcommand("train", "train one model and write a checkpoint");
  add_common(train, common);
  train->add_option("--data", train_data, "dataset directory")->required();
  train->add_option("--mode", train_mode, "single, joint_naive or joint_fsca");
  train->add_option("--domains", train_domains, "domain ids to train on (default: all)")->delimiter(',');
  train->add_option("--out", train_out, "checkpoint path")->required();
  train->add_option("--trace", train_trace, "JSON-lines trace path");

  // eval
  std::string eval_data, eval_ckpt, eval_mode = "joint_fsca";
  std::vector<int> eval_domains;
  std::size_t eval_partners = 0;
  auto* eval = app.add_subcommand("eval", "count MAE/MSE of a checkpoint on test splits");
  add_common(eval, common);
  eval->add_option("--data", eval_data, "dataset directory")->required();
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint path")->required();
  eval->add_option("--mode", eval_mode, "single, joint_naive or joint_fsca");
  eval->add_option("--domains", eval_domains, "domains to evaluate (default: all)")->delimiter(',');
  eval->add_option("--partners", eval_partners,
                   "joint_fsca only: attend to this many training images of the other evaluated domains");

  // protocol
  std::string proto_data, proto_out;
  bool proto_no_timing = false;
  auto* proto = app.add_subcommand("protocol", "run the table1 / generalization protocol");
  add_common(proto, common);
  proto->add_option("--data", proto_data, "dataset directory (default: generate from config)");
  proto->add_option("--out", proto_out, "report path (default: stdout)");
  proto->add_flag("--no-timing", proto_no_timing, "omit wall-clock fields");

  // gradcheck
  std::size_t gc_cases = 100;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every differentiable op");
  gc->add_option("--cases", gc_cases, "random instances per op and for the composed objective");

  // mibench
  std::vector<double> mi_rhos = {0.0, 0.2, 0.4, 0.6, 0.8, 0.9};
  std::size_t mi_dim = 4, mi_seeds = 5;
  std::string mi_out;
  auto* mi = app.add_subcommand("mibench", "InfoNCE and CLUB against analytic Gaussian MI");
  mi->add_option("--rho", mi_rhos, "correlations")->delimiter(',');
  mi->add_option("--dim", mi_dim, "latent dimension");
  mi->add_option("--seeds", mi_seeds, "seeds 1..n averaged per row");
  mi->add_option("--out", mi_out, "CSV path (default: stdout)");

  // flops
  bool full_shapes = false;
  auto* flops = app.add_subcommand("flops", "parameter and multiply-accumulate counts");
  add_common(flops, common);
  flops->add_flag("--paper-shapes", full_shapes, "full-size decoder and counter templates");

  // export-features
  std::string ex_data, ex_ckpt, ex_kind = "ds", ex_out, ex_split = "test";
  auto* ex = app.add_subcommand("export-features", "pooled latents per sample as CSV");
  add_common(ex, common);
  ex->add_option("--data", ex_data, "dataset directory")->required();
  ex->add_option("--checkpoint", ex_ckpt, "checkpoint path")->required();
  ex->add_option("--kind", ex_kind, "base, di or ds");
  ex->add_option("--split", ex_split, "train, test or all");
  ex->add_option("--out", ex_out, "CSV path")->required();

  // probe
  std::string probe_in;
  std::uint64_t probe_seed = 0;
  auto* probe = app.add_subcommand("probe", "linear domain probe on a feature CSV");
  probe->add_option("--features", probe_in, "CSV from export-features")->required();
  probe->add_option("--seed", probe_seed, "split seed");

  if (args.empty()) {
    err << app.help();
    return 1;
  }
  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "fsca: " << e.what() << "\n" << app.help();
    return 1;
  }

  try {
    if (*gen) {
      const ProtocolConfig cfg = common.load();
      const DataConfig& d = cfg.data;
      const Dataset ds = generate_dataset(d.domains, d.seed, d.train_per_domain, d.test_per_domain, d.height, d.width);
      write_dataset(gen_out, ds.scenes, ds.manifest);
      out << "wrote " << ds.scenes.size() << " scenes to " << gen_out << "\n";
    } else if (*train) {
      const ProtocolConfig cfg = common.load();
      const TrainMode mode = parse_train_mode(train_mode);
      const auto domains = select(load_domains(train_data, cfg), train_domains);
      const TrainResult r = train_run(domains, cfg.train, mode);
      save_checkpoint(train_out, r.checkpoint);
      if (!train_trace.empty()) {
        std::string lines;
        for (const auto& rec : r.trace) lines += step_json(rec).dump() + "\n";
        write_text(train_trace, lines);
      }
      out << "trained " << r.trace.size() << " steps (" << train_mode_name(mode) << "), final L_counter "
          << r.trace.back().l_counter << "\n";
    } else if (*eval) {
      const ProtocolConfig cfg = common.load();
      const TrainMode mode = parse_train_mode(eval_mode);
      const NetParams params = load_network(eval_ckpt, cfg);
      const auto domains = select(load_domains(eval_data, cfg), eval_domains);
      Json report = Json::array();
      for (const auto& d : domains) {
        Batch pool;
        if (eval_partners > 0) {
          for (const auto& other : domains) {
            if (other.domain == d.domain) continue;
            for (const auto& s : other.train) pool.push_back(&s);
          }
          if (pool.empty()) throw ConfigError("eval: --partners needs at least two evaluated domains");
        }
        std::vector<double> truth;
        for (const auto& s : d.test) truth.push_back(s.count);
        const CountErrors e = eval_mae_mse(predict_counts(params, d.test, mode, pool, eval_partners), truth);
        report.push_back({{"domain", d.domain}, {"mae", e.mae}, {"mse", e.mse}});
      }
      out << report.dump(2) << "\n";
    } else if (*proto) {
      const ProtocolConfig cfg = common.load();
      std::vector<DomainData> domains;
      if (proto_data.empty()) {
        const DataConfig& d = cfg.data;
        domains = prepare_domains(generate_dataset(d.domains, d.seed, d.train_per_domain, d.test_per_domain, d.height, d.width),
                                  cfg.train.gt_sigma, cfg.train.density_stride);
      } else {
        domains = load_domains(proto_data, cfg);
      }
      const ProtocolRun run = run_protocol(domains, cfg, [&](const std::string& m) { err << m << "\n"; });
      const std::string text = run.report.to_json(!proto_no_timing).dump(2) + "\n";
      if (proto_out.empty()) {
        out << text;
      } else {
        write_text(proto_out, text);
      }
    } else if (*gc) {
      GradSuiteOptions opt;
      opt.cases_per_op = gc_cases;
      opt.composed_cases = gc_cases;
      bool ok = true;
      char line[200];
      for (const auto& r : run_gradcheck_suite(opt)) {
        const bool pass = r.max_rel_error < 1e-4 && r.elements > 0;
        ok = ok && pass;
        std::snprintf(line, sizeof line, "%-26s cases %4zu  checked %6zu  kinks %5zu  unresolved %5zu  max_rel_err %.3e  %s\n",
                      r.name.c_str(), r.cases, r.elements, r.kinks_skipped, r.unresolved, r.max_rel_error,
                      pass ? "ok" : "FAIL");
        out << line;
      }
      return ok ? 0 : 1;
    } else if (*mi) {
      std::vector<std::uint64_t> seeds;
      for (std::size_t s = 1; s <= mi_seeds; ++s) seeds.push_back(s);
      const std::string csv = mibench_csv(run_mibench(mi_rhos, mi_dim, seeds));
      if (mi_out.empty()) {
        out << csv;
      } else {
        write_text(mi_out, csv);
      }
    } else if (*flops) {
      const ProtocolConfig cfg = common.load();
      const std::size_t h = cfg.data.height, w = cfg.data.width;
      std::vector<std::pair<std::string, ComplexityReport>> parts;
      if (full_shapes) {
        parts.emplace_back("decoder", count_params_flops(full_decoder_layers(h / 4, w / 4)));
        parts.emplace_back("counter", count_params_flops(full_counter_layers(h / 4, w / 4)));
      } else {
        parts.emplace_back("network", count_params_flops(network_layers(cfg.train.net, h, w)));
      }
      out << "# MACs = multiply-accumulates (weights x output pixels), input " << h << "x" << w << "\n";
      for (const auto& [title, rep] : parts) {
        out << title << ":\n";
        for (const auto& l : rep.layers) {
          out << "  " << l.name << "  params " << l.params << "  macs " << l.macs << "  out " << l.out_h << "x"
              << l.out_w << "\n";
        }
        out << "  total params " << rep.total_params << "  total macs " << rep.total_macs << "\n";
      }
    } else if (*ex) {
      const ProtocolConfig cfg = common.load();
      const NetParams params = load_network(ex_ckpt, cfg);
      const auto domains = load_domains(ex_data, cfg);
      if (ex_split != "train" && ex_split != "test" && ex_split != "all") {
        throw ConfigError("export-features: --split must be train, test or all");
      }
      std::vector<const LabeledSample*> samples;
      for (const auto& d : domains) {
        if (ex_split != "train") for (const auto& s : d.test) samples.push_back(&s);
        if (ex_split != "test") for (const auto& s : d.train) samples.push_back(&s);
      }
      export_features(params, samples, parse_feature_kind(ex_kind), ex_out);
      out << "wrote " << samples.size() << " rows to " << ex_out << "\n";
    } else if (*probe) {
      ProbeOptions opt;
      opt.seed = probe_seed;
      char line[64];
      std::snprintf(line, sizeof line, "accuracy %.4f\n", domain_probe(read_feature_csv(probe_in), opt));
      out << line;
    }
  } catch (const Error& e) {
    err << "fsca: " << e.what() << "\n";
    return e.exit_code();
  } catch (const fs::filesystem_error& e) {
    err << "fsca: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "fsca: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace fsca
