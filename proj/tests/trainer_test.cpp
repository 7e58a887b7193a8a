#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "fsca/errors.hpp"
#include "fsca/ops.hpp"
#include "fsca/trainer.hpp"
#include "test_util.hpp"

using namespace fsca;
using fsca::testing::T;
using fsca::testing::values;

namespace {

TrainConfig tiny_config() {
  TrainConfig c;
  c.net.backbone_channels = {4, 8, 8, 8};
  c.net.feature_channels = 4;
  c.net.latent_dim = 8;
  c.batch_size = 2;
  c.steps = 6;
  c.seed = 3;
  return c;
}

std::vector<DomainData> tiny_domains(std::size_t n_domains, std::size_t train = 4) {
  std::vector<DomainSpec> specs = default_domains();
  specs.resize(n_domains);
  for (auto& s : specs) {
    s.count_min = 2;
    s.count_max = 6;
  }
  return prepare_domains(generate_dataset(specs, 11, train, 2, 32, 32), 2.0, 4);
}

Batch batch_of(const std::vector<LabeledSample>& samples, std::size_t n) {
  Batch b;
  for (std::size_t i = 0; i < n; ++i) b.push_back(&samples[i]);
  return b;
}

std::vector<std::vector<double>> snapshot(const std::vector<Tensor>& ts) {
  std::vector<std::vector<double>> out;
  for (const auto& t : ts) out.push_back(values(t));
  return out;
}

}  // namespace

TEST(CountingLoss, Examples) {
  const Tensor gt = T({1, 2, 2}, {0.5, 0.1, 0.0, 2.0});
  EXPECT_EQ(counting_loss(gt, gt).item(), 0.0);
  EXPECT_NEAR(counting_loss(add_scalar(gt, 1.0), gt).item(), 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(counting_loss(T({1, 2, 2}, {1, 0, 0, 0}), Tensor::zeros({1, 2, 2})).item(), 0.25);
  EXPECT_THROW(counting_loss(gt, Tensor::zeros({1, 2, 3})), DimensionError);
}

TEST(TotalLoss, Composition) {
  TrainConfig cfg;
  EXPECT_EQ(cfg.beta1, 0.1);
  EXPECT_EQ(cfg.beta2, 0.01);
  EXPECT_NEAR(total_loss(1.0, 2.0, 0.5, 3.0, cfg), 0.88, 1e-15);
  cfg.beta1 = cfg.beta2 = 0.0;
  EXPECT_EQ(total_loss(1.25, 2.0, 0.5, 3.0, cfg), 1.25);
  try {
    total_loss(1.0, std::nan(""), 0.5, 3.0, cfg);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("I_LB"), std::string::npos) << e.what();
  }
}

TEST(TrainStep, DeterministicFromIdenticalState) {
  const auto domains = tiny_domains(2);
  Trainer a(tiny_config()), b(tiny_config());
  const Batch t = batch_of(domains[0].train, 2), p = batch_of(domains[1].train, 2);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(a.train_step(t, p), b.train_step(t, p));
  EXPECT_EQ(snapshot(a.params().parameters()), snapshot(b.params().parameters()));
}

TEST(TrainStep, RecordTotalMatchesItsComponents) {
  const auto domains = tiny_domains(2);
  const TrainConfig cfg = tiny_config();
  Trainer tr(cfg);
  for (int i = 0; i < 4; ++i) {
    const StepRecord r = tr.train_step(batch_of(domains[i % 2].train, 2), batch_of(domains[1 - i % 2].train, 2));
    EXPECT_NEAR(r.total, total_loss(r.l_counter, r.i_lb, r.i_club, r.l_delta2, cfg), 1e-6);
    EXPECT_EQ(r.target_domain, domains[i % 2].domain);
    EXPECT_EQ(r.partner_domain, domains[1 - i % 2].domain);
    EXPECT_EQ(r.step, static_cast<std::size_t>(i));
  }
}

TEST(TrainStep, UpdatesBothSidesWithoutLeakingGradients) {
  const auto domains = tiny_domains(2);
  Trainer tr(tiny_config());
  const auto main0 = snapshot(tr.params().parameters());
  const auto q0 = snapshot(tr.q().parameters());
  // the step itself throws ContractError if a frozen side picks up a gradient
  EXPECT_NO_THROW(tr.train_step(batch_of(domains[0].train, 2), batch_of(domains[1].train, 2)));
  EXPECT_NE(snapshot(tr.params().parameters()), main0);
  EXPECT_NE(snapshot(tr.q().parameters()), q0);
}

TEST(TrainStep, RejectsSameDomainAndMismatchedBatches) {
  const auto domains = tiny_domains(2);
  Trainer tr(tiny_config());
  EXPECT_THROW(tr.train_step(batch_of(domains[0].train, 2), batch_of(domains[0].train, 2)), ContractError);
  EXPECT_THROW(tr.train_step(batch_of(domains[0].train, 2), batch_of(domains[1].train, 3)), ContractError);
}

TEST(NoGradScope, RestoresFlags) {
  Tensor a = Tensor::zeros({2}, true), b = Tensor::zeros({2}, false);
  {
    NoGradScope scope({a, b});
    EXPECT_FALSE(a.requires_grad());
    EXPECT_FALSE(b.requires_grad());
  }
  EXPECT_TRUE(a.requires_grad());
  EXPECT_FALSE(b.requires_grad());
}

TEST(TrainStep, OverfitsAFixedBatch) {
  auto domains = tiny_domains(2, 8);
  // default network; q gets enough updates to track the moving latents,
  // otherwise the CLUB term runs away on a fixed batch
  TrainConfig cfg;
  cfg.q_steps = 5;
  cfg.lr_q = 1e-2;
  Trainer tr(cfg);
  const Batch t = batch_of(domains[0].train, 8), p = batch_of(domains[1].train, 8);
  const double first = tr.train_step(t, p).l_counter;
  double last = first;
  for (int i = 1; i < 300; ++i) last = tr.train_step(t, p).l_counter;
  EXPECT_LE(last, 0.1 * first) << "first " << first << " last " << last;
}

TEST(TrainRun, TraceLengthAndDeterminism) {
  const auto domains = tiny_domains(2);
  const TrainConfig cfg = tiny_config();
  for (const TrainMode mode : {TrainMode::single, TrainMode::joint_naive, TrainMode::joint_fsca}) {
    const TrainResult a = train_run(domains, cfg, mode);
    const TrainResult b = train_run(domains, cfg, mode);
    EXPECT_EQ(a.trace.size(), cfg.steps) << train_mode_name(mode);
    EXPECT_EQ(a.trace, b.trace);
    ASSERT_EQ(a.checkpoint.size(), b.checkpoint.size());
    for (std::size_t i = 0; i < a.checkpoint.size(); ++i) {
      EXPECT_EQ(a.checkpoint[i].first, b.checkpoint[i].first);
      EXPECT_EQ(values(a.checkpoint[i].second), values(b.checkpoint[i].second));
    }
  }
}

TEST(TrainRun, InsufficientDomainsIsAConfigError) {
  const auto one = tiny_domains(1);
  EXPECT_THROW(train_run(one, tiny_config(), TrainMode::joint_fsca), ConfigError);
  EXPECT_THROW(train_run(one, tiny_config(), TrainMode::joint_naive), ConfigError);
  EXPECT_THROW(train_run({}, tiny_config(), TrainMode::single), ConfigError);
}

TEST(TrainRun, RoundRobinVisitsDomainsEqually) {
  const auto domains = tiny_domains(3);
  TrainConfig cfg = tiny_config();
  cfg.steps = 12;
  const TrainResult r = train_run(domains, cfg, TrainMode::joint_fsca);
  for (std::size_t start = 0; start + 6 <= r.trace.size(); ++start) {
    std::map<int, int> seen;
    for (std::size_t i = start; i < start + 6; ++i) {
      ++seen[r.trace[i].target_domain];
      EXPECT_NE(r.trace[i].partner_domain, r.trace[i].target_domain);
    }
    for (const auto& d : domains) EXPECT_NEAR(seen[d.domain], 2, 1);
  }
}

TEST(PrepareDomains, PooledDensityMatchesCount) {
  const auto domains = tiny_domains(2);
  ASSERT_EQ(domains.size(), 2u);
  for (const auto& d : domains) {
    for (const auto& s : d.train) {
      EXPECT_EQ(s.density.shape(), (Shape{1, 8, 8}));
      EXPECT_NEAR(sum(s.density).item(), s.count, 1e-6);
    }
  }
}
