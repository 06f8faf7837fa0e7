// Serial reference vs OpenMP kernels on shapes the desk run actually hits.
// Run with OMP_NUM_THREADS=N to vary the thread count.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "mdfl/kernels.hpp"

namespace {

using namespace mdfl;
namespace k = mdfl::kernels;

std::vector<float> random_vec(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> d;
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

// rows = batch 64 x 7 x 7 pixels; inner dim 9 * width for a 3x3 conv.
template <bool Omp>
void BM_Gemm(benchmark::State& state) {
  const auto tb = state.range(0) ? k::Trans::yes : k::Trans::no;
  const std::size_t m = 64 * 49, n = static_cast<std::size_t>(state.range(1)), kk = 144;
  const auto a = random_vec(m * kk, 1), b = random_vec(kk * n, 2);
  std::vector<float> c(m * n);
  for (auto _ : state) {
    if constexpr (Omp) {
      k::omp::gemm(k::Trans::no, tb, m, n, kk, a.data(), b.data(), c.data(), false);
    } else {
      k::serial::gemm(k::Trans::no, tb, m, n, kk, a.data(), b.data(), c.data(), false);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations() * m * n * kk));
}

template <bool Omp>
void BM_Im2col(benchmark::State& state) {
  const std::size_t batch = 64, h = 7, w = 7, c = static_cast<std::size_t>(state.range(0));
  const auto x = random_vec(batch * h * w * c, 3);
  std::vector<float> cols(batch * h * w * 9 * c);
  for (auto _ : state) {
    if constexpr (Omp) {
      k::omp::im2col3x3(x.data(), batch, h, w, c, cols.data());
    } else {
      k::serial::im2col3x3(x.data(), batch, h, w, c, cols.data());
    }
    benchmark::DoNotOptimize(cols.data());
  }
}

template <bool Omp>
void BM_Dft2d(benchmark::State& state) {
  const std::size_t batch = 64, side = static_cast<std::size_t>(state.range(0)), c = 16;
  const DftPlan<float> plan(side);
  const auto x = random_vec(batch * side * side * c, 4);
  std::vector<float> re(x.size()), im(x.size());
  for (auto _ : state) {
    if constexpr (Omp) {
      k::omp::dft2d(plan, plan, batch, c, x.data(), static_cast<const float*>(nullptr), re.data(), im.data(), false);
    } else {
      k::serial::dft2d(plan, plan, batch, c, x.data(), static_cast<const float*>(nullptr), re.data(), im.data(), false);
    }
    benchmark::DoNotOptimize(re.data());
  }
}

BENCHMARK(BM_Gemm<false>)->Name("gemm/serial")->ArgsProduct({{0, 1}, {16, 64}});
BENCHMARK(BM_Gemm<true>)->Name("gemm/omp")->ArgsProduct({{0, 1}, {16, 64}});
BENCHMARK(BM_Im2col<false>)->Name("im2col/serial")->Arg(16)->Arg(80);
BENCHMARK(BM_Im2col<true>)->Name("im2col/omp")->Arg(16)->Arg(80);
BENCHMARK(BM_Dft2d<false>)->Name("dft2d/serial")->Arg(7)->Arg(8);
BENCHMARK(BM_Dft2d<true>)->Name("dft2d/omp")->Arg(7)->Arg(8);

}  // namespace

BENCHMARK_MAIN();
