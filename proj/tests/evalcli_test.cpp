#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "cli.hpp"
#include "fsca/complexity.hpp"
#include "fsca/config.hpp"
#include "fsca/errors.hpp"
#include "fsca/metrics.hpp"
#include "fsca/protocol.hpp"
#include "test_util.hpp"

using namespace fsca;
using fsca::testing::file_bytes;
using fsca::testing::overwrite_prefix;
using fsca::testing::scratch_dir;

namespace {

struct CliResult {
  int code;
  std::string out, err;
};

CliResult cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

FeatureTable clustered_table(std::size_t domains, std::size_t per_domain, double spread,
                             std::uint64_t seed) {
  FeatureTable t;
  Rng rng(seed);
  for (std::size_t d = 0; d < domains; ++d) {
    for (std::size_t i = 0; i < per_domain; ++i) {
      t.ids.push_back("s" + std::to_string(d) + "_" + std::to_string(i));
      t.domains.push_back(static_cast<int>(d));
      std::vector<double> row(4);
      for (std::size_t k = 0; k < 4; ++k) row[k] = (k == d ? 10.0 : 0.0) + spread * rng.normal();
      t.rows.push_back(row);
    }
  }
  return t;
}

ProtocolConfig tiny_protocol() {
  ProtocolConfig c;
  c.data.domains.resize(2);
  for (auto& d : c.data.domains) {
    d.count_min = 2;
    d.count_max = 6;
  }
  c.data.train_per_domain = 4;
  c.data.test_per_domain = 3;
  c.data.height = c.data.width = 32;
  c.train.net.backbone_channels = {4, 8, 8, 8};
  c.train.net.feature_channels = 4;
  c.train.net.latent_dim = 8;
  c.train.batch_size = 2;
  c.train.steps = 4;
  c.seeds = {1, 2};
  c.eval_partners = 2;
  return c;
}

std::vector<DomainData> domains_for(const ProtocolConfig& c) {
  const Dataset ds = generate_dataset(c.data.domains, c.data.seed, c.data.train_per_domain,
                                      c.data.test_per_domain, c.data.height, c.data.width);
  return prepare_domains(ds, c.train.gt_sigma, c.train.density_stride);
}

}  // namespace

TEST(EvalMaeMse, Examples) {
  const CountErrors same = eval_mae_mse({3, 4}, {3, 4});
  EXPECT_EQ(same.mae, 0.0);
  EXPECT_EQ(same.mse, 0.0);
  const CountErrors e = eval_mae_mse({10, 20}, {12, 16});
  EXPECT_DOUBLE_EQ(e.mae, 3.0);
  EXPECT_NEAR(e.mse, std::sqrt(10.0), 1e-12);
  const CountErrors one = eval_mae_mse({7.5}, {5.0});
  EXPECT_DOUBLE_EQ(one.mae, 2.5);
  EXPECT_DOUBLE_EQ(one.mse, 2.5);
  EXPECT_THROW(eval_mae_mse({}, {}), InputError);
  EXPECT_THROW(eval_mae_mse({1}, {1, 2}), InputError);
}

TEST(EvalMaeMse, MaeNeverExceedsMse) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> p(1 + trial % 7), g(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] = 20 * rng.uniform();
      g[i] = 20 * rng.uniform();
    }
    const CountErrors e = eval_mae_mse(p, g);
    EXPECT_LE(e.mae, e.mse + 1e-12);
  }
}

TEST(Probe, SeparableClustersAreFullyPredicted) {
  EXPECT_EQ(domain_probe(clustered_table(3, 30, 0.5, 1)), 1.0);
}

TEST(Probe, ShuffledLabelsSitAtChance) {
  const std::size_t domains = 2, per = 50;
  double total = 0.0;
  for (std::uint64_t trial = 0; trial < 10; ++trial) {
    FeatureTable t = clustered_table(domains, per, 1.0, trial);
    // features carry no domain information at all
    Rng rng(100 + trial);
    for (auto& row : t.rows) {
      for (auto& v : row) v = rng.normal();
    }
    const double acc = domain_probe(t, {.seed = trial});
    EXPECT_GE(acc, 0.0);
    EXPECT_LE(acc, 1.0);
    total += acc;
  }
  // held-out set is 20 per trial, so the mean over 10 trials has sd ≈ 0.035
  const double sd = std::sqrt(0.25 / (10.0 * 20.0));
  EXPECT_NEAR(total / 10.0, 0.5, 3.0 * sd);
}

TEST(Probe, SingleDomainIsAnInputError) {
  EXPECT_THROW(domain_probe(clustered_table(1, 10, 1.0, 1)), InputError);
}

TEST(FeatureCsv, RoundTripAndDeterminism) {
  const auto dir = scratch_dir();
  const FeatureTable t = clustered_table(2, 5, 1.0, 3);
  write_feature_csv(dir / "a.csv", t);
  write_feature_csv(dir / "b.csv", read_feature_csv(dir / "a.csv"));
  EXPECT_EQ(file_bytes(dir / "a.csv"), file_bytes(dir / "b.csv"));
  EXPECT_EQ(file_bytes(dir / "a.csv").substr(0, 39), "sample_id,domain,dim_0,dim_1,dim_2,dim_");
  EXPECT_EQ(read_feature_csv(dir / "a.csv").size(), 10u);
}

TEST(Complexity, HandExamples) {
  const auto empty = count_params_flops({});
  EXPECT_EQ(empty.total_params, 0u);
  EXPECT_EQ(empty.total_macs, 0u);
  LayerShape l;
  l.name = "pw";
  l.c_in = 8;
  l.c_out = 4;
  l.in_h = l.in_w = 10;
  const auto r = count_params_flops({l});
  EXPECT_EQ(r.total_params, 36u);
  EXPECT_EQ(r.total_macs, 3200u);
}

TEST(Complexity, TotalsAreLayerSums) {
  const auto r = count_params_flops(network_layers(NetConfig{}, 64, 64));
  std::uint64_t p = 0, m = 0;
  for (const auto& l : r.layers) {
    p += l.params;
    m += l.macs;
  }
  EXPECT_EQ(p, r.total_params);
  EXPECT_EQ(m, r.total_macs);
}

TEST(Config, DefaultsAndOverrides) {
  const ProtocolConfig def = protocol_config_from_json(Json::object());
  EXPECT_EQ(def.train.beta1, 0.1);
  EXPECT_EQ(def.train.beta2, 0.01);
  Json doc = Json::object();
  apply_override(doc, "train.beta1=0.5");
  apply_override(doc, "train.club_pairing=ds_di");
  const ProtocolConfig c = protocol_config_from_json(doc);
  EXPECT_EQ(c.train.beta1, 0.5);
  EXPECT_EQ(c.train.club_pairing, ClubPairing::ds_di);
  // round trip through JSON keeps every field
  EXPECT_EQ(protocol_config_to_json(protocol_config_from_json(protocol_config_to_json(c))),
            protocol_config_to_json(c));
}

TEST(Config, RejectsUnknownKeysAndBadTypes) {
  EXPECT_THROW(protocol_config_from_json(Json::parse(R"({"train":{"betaa":1}})")), ConfigError);
  EXPECT_THROW(protocol_config_from_json(Json::parse(R"({"train":{"beta1":"x"}})")), ConfigError);
  EXPECT_THROW(protocol_config_from_json(Json::parse(R"({"train":{"beta1":-1}})")), ConfigError);
}

TEST(Protocol, ReportIsDeterministicAndWellFormed) {
  const ProtocolConfig cfg = tiny_protocol();
  const auto domains = domains_for(cfg);
  const ProtocolRun a = run_protocol(domains, cfg);
  const ProtocolRun b = run_protocol(domains, cfg);
  EXPECT_EQ(a.report.to_json(false).dump(), b.report.to_json(false).dump());
  for (const char* mode : {"single", "joint_naive", "joint_fsca"}) {
    for (const auto& d : domains) {
      const ReportCell& c = find_cell(a.report.table1, mode, d.domain);
      EXPECT_LE(c.mae, c.mse + 1e-12);
      EXPECT_EQ(c.seed_mae.size(), cfg.seeds.size());
    }
  }
  EXPECT_THROW(find_cell(a.report.table1, "nope", 0), ContractError);
}

TEST(Protocol, TooFewDomainsIsAConfigError) {
  ProtocolConfig cfg = tiny_protocol();
  auto domains = domains_for(cfg);
  domains.resize(1);
  cfg.data.domains.resize(1);
  EXPECT_THROW(run_protocol(domains, cfg), ConfigError);
}

TEST(Cli, UsageAndUnknownSubcommand) {
  EXPECT_EQ(cli({}).code, 1);
  EXPECT_EQ(cli({"frobnicate"}).code, 1);
  EXPECT_EQ(cli({"train", "--no-such-flag"}).code, 1);
}

TEST(Cli, FlopsFullSizeShapes) {
  const CliResult r = cli({"flops", "--paper-shapes"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("1476097"), std::string::npos) << r.out;
}

TEST(Cli, GenEvalAndCorruptMagic) {
  const auto dir = scratch_dir();
  const auto cfg_path = dir / "cfg.json";
  {
    std::ofstream(cfg_path) << protocol_config_to_json(tiny_protocol()).dump(2);
  }
  const std::string data = (dir / "data").string();
  ASSERT_EQ(cli({"gen", "--config", cfg_path.string(), "--out", data}).code, 0);
  const std::string ckpt = (dir / "m.ckpt").string();
  const CliResult tr = cli({"train", "--config", cfg_path.string(), "--data", data, "--mode", "joint_fsca",
                            "--out", ckpt, "--trace", (dir / "trace.jsonl").string()});
  ASSERT_EQ(tr.code, 0) << tr.err;
  const CliResult ev = cli({"eval", "--config", cfg_path.string(), "--data", data, "--checkpoint", ckpt,
                            "--mode", "joint_fsca"});
  ASSERT_EQ(ev.code, 0) << ev.err;
  EXPECT_NE(ev.out.find("mae"), std::string::npos);

  const std::string f1 = (dir / "f1.csv").string(), f2 = (dir / "f2.csv").string();
  ASSERT_EQ(cli({"export-features", "--config", cfg_path.string(), "--data", data, "--checkpoint", ckpt,
                 "--kind", "di", "--out", f1}).code, 0);
  ASSERT_EQ(cli({"export-features", "--config", cfg_path.string(), "--data", data, "--checkpoint", ckpt,
                 "--kind", "di", "--out", f2}).code, 0);
  EXPECT_EQ(file_bytes(f1), file_bytes(f2));
  EXPECT_EQ(cli({"export-features", "--config", cfg_path.string(), "--data", data, "--checkpoint", ckpt,
                 "--kind", "xyz", "--out", f2}).code, 1);

  overwrite_prefix(ckpt, "NOTACKPT");
  const CliResult bad = cli({"eval", "--config", cfg_path.string(), "--data", data, "--checkpoint", ckpt});
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.err.find("m.ckpt"), std::string::npos) << bad.err;
  EXPECT_EQ(cli({"eval", "--data", (dir / "missing").string(), "--checkpoint", ckpt}).code, 2);
}

TEST(Cli, BadConfigIsExitOne) {
  const auto dir = scratch_dir();
  EXPECT_EQ(cli({"gen", "--out", (dir / "d").string(), "--set", "data.train_per_domain=-3"}).code, 1);
  EXPECT_EQ(cli({"gen", "--out", (dir / "d").string(), "--set", "nonsense.key=1"}).code, 1);
}
