#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "fsca/errors.hpp"
#include "fsca/gradcheck.hpp"
#include "fsca/kernels.hpp"
#include "fsca/ops.hpp"
#include "fsca/optim.hpp"
#include "test_util.hpp"

using namespace fsca;
using fsca::testing::randn;
using fsca::testing::T;
using fsca::testing::values;

TEST(Matmul, IdentityAndHandValues) {
  const Tensor a = T({2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(values(matmul(T({2, 2}, {1, 0, 0, 1}), a)), values(a));
  EXPECT_EQ(values(matmul(a, T({2, 1}, {5, 6}))), (std::vector<double>{17, 39}));
  EXPECT_THROW(matmul(a, T({3, 1}, {1, 2, 3})), DimensionError);
}

TEST(Matmul, GradientOfSumMatchesFiniteDifferences) {
  const Tensor a = randn({3, 4}, 1, true), b = randn({4, 2}, 2, true);
  const auto r = check_gradients([](const auto& in) { return sum(matmul(in[0], in[1])); }, {a, b});
  EXPECT_EQ(r.elements, 20u);
  EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(Conv2d, OneByOneIdentityKernel) {
  const Tensor x = randn({1, 4, 5}, 3);
  const Tensor y = conv2d(x, T({1, 1, 1, 1}, {1.0}), T({1}, {0.0}), 1, 0);
  EXPECT_EQ(values(y), values(x));
}

TEST(Conv2d, AllOnesKernelOnConstantImage) {
  const double c = 0.7;
  const Tensor x = Tensor::full({1, 5, 5}, c);
  const Tensor y = conv2d(x, Tensor::full({1, 1, 3, 3}, 1.0), Tensor::zeros({1}), 1, 1);
  EXPECT_NEAR(y[2 * 5 + 2], 9 * c, 1e-12);
  EXPECT_NEAR(y[0], 4 * c, 1e-12);
  EXPECT_NEAR(y[24], 4 * c, 1e-12);
  EXPECT_NEAR(y[2], 6 * c, 1e-12);
}

TEST(Conv2d, RejectsNonIntegralExtentAndEvenKernels) {
  EXPECT_THROW(conv2d(Tensor::zeros({1, 4, 4}), Tensor::zeros({1, 1, 3, 3}), Tensor(), 2, 0), DimensionError);
  EXPECT_THROW(conv2d(Tensor::zeros({1, 4, 4}), Tensor::zeros({1, 1, 2, 2}), Tensor(), 1, 0), DimensionError);
}

TEST(Conv2d, GradientOnTwoChannelInput) {
  const Tensor x = randn({2, 5, 5}, 4, true), w = randn({3, 2, 3, 3}, 5, true), b = randn({3}, 6, true);
  const Tensor weights = randn({3, 5, 5}, 7);
  const auto r = check_gradients(
      [&](const auto& in) { return sum(mul(conv2d(in[0], in[1], in[2], 1, 1), weights)); }, {x, w, b});
  EXPECT_EQ(r.elements, 50u + 54u + 3u);
  EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(SoftmaxRows, HandValues) {
  EXPECT_EQ(values(softmax_rows(T({1, 2}, {0, 0}))), (std::vector<double>{0.5, 0.5}));
  const Tensor s = softmax_rows(T({1, 2}, {0, std::log(3.0)}));
  EXPECT_NEAR(s[0], 0.25, 1e-15);
  EXPECT_NEAR(s[1], 0.75, 1e-15);
  EXPECT_EQ(values(softmax_rows(T({1, 2}, {1000, 1000}))), (std::vector<double>{0.5, 0.5}));
}

TEST(SoftmaxRows, RowsSumToOneAndStayInsideUnitInterval) {
  const Tensor s = softmax_rows(randn({6, 9}, 8, false, 5.0));
  for (std::size_t i = 0; i < 6; ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < 9; ++j) {
      const double v = s[i * 9 + j];
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
      total += v;
    }
    EXPECT_NEAR(total, 1.0, 1e-6);
  }
}

TEST(SoftmaxRows, NanInputRaisesNumericError) {
  EXPECT_THROW(softmax_rows(T({1, 2}, {0.0, std::nan("")})), NumericError);
}

TEST(SumPool2d, HandValuesIdentityAndMass) {
  EXPECT_EQ(values(sum_pool2d(T({1, 2, 2}, {1, 2, 3, 4}), 2)), (std::vector<double>{10}));
  const Tensor x = randn({4, 8, 8}, 9);
  EXPECT_EQ(values(sum_pool2d(x, 1)), values(x));
  const auto in = values(x);
  const auto out = values(sum_pool2d(x, 4));
  EXPECT_NEAR(std::accumulate(out.begin(), out.end(), 0.0), std::accumulate(in.begin(), in.end(), 0.0), 1e-12);
  EXPECT_THROW(sum_pool2d(Tensor::zeros({1, 6, 6}), 4), DimensionError);
}

TEST(Backward, SumOfSquares) {
  const Tensor x = randn({5}, 10, true);
  backward(sum(mul(x, x)));
  for (std::size_t i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(x.grad()[i], 2.0 * x[i]);
}

TEST(Backward, RepeatedCallsAccumulateLeafGradients) {
  const Tensor x = randn({3}, 11, true);
  const Tensor root = sum(scale(x, 3.0));
  backward(root);
  backward(root);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(x.grad()[i], 6.0);
}

TEST(Backward, ConstantLeafGetsNoGradient) {
  const Tensor x = randn({3}, 12, true);
  const Tensor c = randn({3}, 13, false);
  backward(sum(mul(x, c)));
  EXPECT_TRUE(x.has_grad());
  EXPECT_FALSE(c.has_grad());
}

TEST(Backward, NonScalarRootIsAContractError) {
  const Tensor x = randn({3}, 14, true);
  EXPECT_THROW(backward(scale(x, 2.0)), ContractError);
}

TEST(Backward, ConvSoftmaxSumComposite) {
  const Tensor x = randn({1, 4, 4}, 15, true), w = randn({2, 1, 3, 3}, 16, true), b = randn({2}, 17, true);
  const Tensor weights = randn({2, 16}, 18);
  const auto r = check_gradients(
      [&](const auto& in) {
        return sum(mul(softmax_rows(reshape(conv2d(in[0], in[1], in[2], 1, 1), {2, 16})), weights));
      },
      {x, w, b});
  EXPECT_GT(r.elements, 0u);
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(Backward, ForwardAndBackwardAreDeterministic) {
  auto run = [] {
    const Tensor x = randn({2, 6, 6}, 19, true), w = randn({3, 2, 3, 3}, 20, true);
    backward(sum(softmax_rows(reshape(relu(conv2d(x, w, Tensor(), 1, 1)), {3, 36}))));
    return std::make_pair(values(x), std::vector<double>(w.grad().begin(), w.grad().end()));
  };
  EXPECT_EQ(run(), run());
}

TEST(Adam, ZeroGradientLeavesParametersAndMomentsUntouched) {
  std::vector<Tensor> p = {randn({4}, 21, true)};
  const auto before = values(p[0]);
  OptimizerState st = make_optimizer_state(p);
  const std::vector<std::vector<double>> g = {std::vector<double>(4, 0.0)};
  adam_step(p, g, st);
  EXPECT_EQ(values(p[0]), before);
  EXPECT_EQ(st.first_moment[0], std::vector<double>(4, 0.0));
  EXPECT_EQ(st.second_moment[0], std::vector<double>(4, 0.0));
  EXPECT_EQ(st.step, 1u);
}

TEST(Adam, FirstStepMovesByLearningRateAgainstTheSign) {
  for (const double g : {3.0, -0.02, 1e-3}) {
    std::vector<Tensor> p = {T({1}, {0.5}, true)};
    OptimizerState st = make_optimizer_state(p, {.lr = 0.01});
    adam_step(p, std::vector<std::vector<double>>{{g}}, st);
    // m̂ = g, v̂ = g², so the step is lr·g/(|g| + ε)
    EXPECT_NEAR(p[0][0], 0.5 - 0.01 * std::copysign(1.0, g), 0.01 * 1e-8 / std::abs(g) + 1e-15);
  }
}

TEST(Adam, IdenticalRunsAreBitwiseEqual) {
  auto run = [] {
    std::vector<Tensor> p = {randn({3, 3}, 22, true)};
    OptimizerState st = make_optimizer_state(p);
    for (int i = 0; i < 5; ++i) adam_step(p, std::vector<std::vector<double>>{values(randn({3, 3}, 30 + i))}, st);
    return values(p[0]);
  };
  EXPECT_EQ(run(), run());
}

TEST(Adam, ShapeMismatchIsADimensionError) {
  std::vector<Tensor> p = {randn({3}, 23, true)};
  OptimizerState st = make_optimizer_state(p);
  EXPECT_THROW(adam_step(p, std::vector<std::vector<double>>{{1.0, 2.0}}, st), DimensionError);
}

TEST(Kernels, ParallelConvMatchesSerialReference) {
  const auto g = kernels::conv2d_geometry(3, 9, 7, 4, 3, 3, 2, 1);
  const auto x = values(randn({3 * 9 * 7}, 24)), w = values(randn({4 * 3 * 9}, 25)), b = values(randn({4}, 26));
  std::vector<double> ys(4 * g.out_pixels()), yp(ys.size());
  kernels::serial::conv2d_forward(g, x, w, b, ys);
  kernels::conv2d_forward(g, x, w, b, yp);
  for (std::size_t i = 0; i < ys.size(); ++i) EXPECT_NEAR(ys[i], yp[i], 1e-12);

  const auto gy = values(randn({ys.size()}, 27));
  std::vector<double> gxs(x.size()), gws(w.size()), gbs(4), gxp(x.size()), gwp(w.size()), gbp(4);
  kernels::serial::conv2d_backward(g, x, w, gy, gxs, gws, gbs);
  kernels::conv2d_backward(g, x, w, gy, gxp, gwp, gbp);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(gxs[i], gxp[i], 1e-12);
  for (std::size_t i = 0; i < w.size(); ++i) EXPECT_NEAR(gws[i], gwp[i], 1e-12);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(gbs[i], gbp[i], 1e-12);
}

TEST(Kernels, ParallelMatmulAndSoftmaxMatchSerialReference) {
  const std::size_t m = 7, k = 5, n = 6;
  const auto a = values(randn({m * k}, 28)), b = values(randn({k * n}, 29));
  std::vector<double> cs(m * n), cp(m * n);
  kernels::serial::matmul(m, k, n, a, b, cs);
  kernels::matmul(m, k, n, a, b, cp);
  for (std::size_t i = 0; i < cs.size(); ++i) EXPECT_NEAR(cs[i], cp[i], 1e-12);

  const auto gc = values(randn({m * n}, 30));
  std::vector<double> gas(a.size()), gbs(b.size()), gap(a.size()), gbp(b.size());
  kernels::serial::matmul_backward(m, k, n, a, b, gc, gas, gbs);
  kernels::matmul_backward(m, k, n, a, b, gc, gap, gbp);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(gas[i], gap[i], 1e-12);
  for (std::size_t i = 0; i < b.size(); ++i) EXPECT_NEAR(gbs[i], gbp[i], 1e-12);

  std::vector<double> ss(cs.size()), sp(cs.size());
  kernels::serial::softmax_rows(m, n, cs, ss);
  kernels::softmax_rows(m, n, cs, sp);
  for (std::size_t i = 0; i < ss.size(); ++i) EXPECT_NEAR(ss[i], sp[i], 1e-15);
}

TEST(GradCheck, SuitePassesForEveryOpAndTheComposedObjective) {
  GradSuiteOptions opt;
  opt.cases_per_op = 20;
  opt.composed_cases = 10;
  for (const auto& r : run_gradcheck_suite(opt)) {
    EXPECT_GT(r.elements, 0u) << r.name;
    EXPECT_LT(r.max_rel_error, 1e-4) << r.name;
  }
}

TEST(GradCheck, DetectsAWrongGradient) {
  // relu backward deliberately replaced by identity through a custom node
  const Tensor x = T({3}, {-1.0, 0.5, 2.0}, true);
  auto broken = [](const std::vector<Tensor>& in) {
    const Tensor& a = in[0];
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, a[i]);
    const Tensor y = Tensor::make_result(a.shape(), out, {a}, [a](detail::Node& self) {
      auto& g = a.node().grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
    return sum(y);
  };
  EXPECT_GT(check_gradients(broken, {x}).max_rel_error, 0.5);
}
