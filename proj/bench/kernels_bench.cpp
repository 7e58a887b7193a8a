#include <benchmark/benchmark.h>

#include <vector>

#include "fsca/kernels.hpp"
#include "fsca/rng.hpp"

namespace k = fsca::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  fsca::Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

// Args: channels, spatial extent. 3×3 kernel, stride 1, pad 1.
struct ConvCase {
  k::Conv2dGeometry g;
  std::vector<double> x, w, b, y;

  explicit ConvCase(const benchmark::State& st) {
    const auto c = static_cast<std::size_t>(st.range(0));
    const auto hw = static_cast<std::size_t>(st.range(1));
    g = k::conv2d_geometry(c, hw, hw, c, 3, 3, 1, 1);
    x = random_vec(c * hw * hw, 1);
    w = random_vec(c * c * 9, 2);
    b = random_vec(c, 3);
    y.assign(c * g.out_pixels(), 0.0);
  }
};

void BM_Conv2dSerial(benchmark::State& st) {
  ConvCase cc(st);
  for (auto _ : st) {
    k::serial::conv2d_forward(cc.g, cc.x, cc.w, cc.b, cc.y);
    benchmark::DoNotOptimize(cc.y.data());
  }
}

void BM_Conv2dOmp(benchmark::State& st) {
  ConvCase cc(st);
  for (auto _ : st) {
    k::conv2d_forward(cc.g, cc.x, cc.w, cc.b, cc.y);
    benchmark::DoNotOptimize(cc.y.data());
  }
}

void BM_Conv2dBackwardSerial(benchmark::State& st) {
  ConvCase cc(st);
  std::vector<double> gx(cc.x.size()), gw(cc.w.size()), gb(cc.b.size());
  for (auto _ : st) {
    k::serial::conv2d_backward(cc.g, cc.x, cc.w, cc.y, gx, gw, gb);
    benchmark::DoNotOptimize(gw.data());
  }
}

void BM_Conv2dBackwardOmp(benchmark::State& st) {
  ConvCase cc(st);
  std::vector<double> gx(cc.x.size()), gw(cc.w.size()), gb(cc.b.size());
  for (auto _ : st) {
    k::conv2d_backward(cc.g, cc.x, cc.w, cc.y, gx, gw, gb);
    benchmark::DoNotOptimize(gw.data());
  }
}

void BM_MatmulSerial(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  const auto a = random_vec(n * n, 1), b = random_vec(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : st) {
    k::serial::matmul(n, n, n, a, b, c);
    benchmark::DoNotOptimize(c.data());
  }
}

void BM_MatmulOmp(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  const auto a = random_vec(n * n, 1), b = random_vec(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : st) {
    k::matmul(n, n, n, a, b, c);
    benchmark::DoNotOptimize(c.data());
  }
}

}  // namespace

BENCHMARK(BM_Conv2dSerial)->Args({16, 32})->Args({32, 16});
BENCHMARK(BM_Conv2dOmp)->Args({16, 32})->Args({32, 16});
BENCHMARK(BM_Conv2dBackwardSerial)->Args({16, 32})->Args({32, 16});
BENCHMARK(BM_Conv2dBackwardOmp)->Args({16, 32})->Args({32, 16});
BENCHMARK(BM_MatmulSerial)->Arg(64)->Arg(256);
BENCHMARK(BM_MatmulOmp)->Arg(64)->Arg(256);

BENCHMARK_MAIN();
