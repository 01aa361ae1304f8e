// Serial reference kernels vs their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include <vector>

#include "inrun/kernels.hpp"
#include "inrun/rng.hpp"

namespace {

using namespace inrun;

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.gaussian();
  return v;
}

template <auto Kernel>
void BM_gemm_nn(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_vec(n * n, 1), b = random_vec(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    Kernel(n, n, n, a.data(), b.data(), c.data());
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}

template <auto Kernel>
void BM_ghost_pair(benchmark::State& state) {
  const auto B = static_cast<std::size_t>(state.range(0));
  const std::size_t d = 256, V = 8;
  const auto acts = random_vec(B * d, 3), errs = random_vec(B * d, 4);
  const auto vacts = random_vec(V * d, 5), verrs = random_vec(V * d, 6);
  std::vector<double> out(B);
  for (auto _ : state) {
    Kernel(B, V, d, d, acts.data(), errs.data(), vacts.data(), verrs.data(), true, out.data());
    benchmark::DoNotOptimize(out.data());
  }
}

template <auto Kernel>
void BM_ghost_weighted(benchmark::State& state) {
  const auto B = static_cast<std::size_t>(state.range(0));
  const std::size_t d = 256;
  const auto acts = random_vec(B * d, 7), errs = random_vec(B * d, 8);
  const auto u = random_vec(d * d, 9), ub = random_vec(d, 10);
  std::vector<double> out(B);
  for (auto _ : state) {
    Kernel(B, d, d, 0, d, acts.data(), errs.data(), u.data(), ub.data(), out.data());
    benchmark::DoNotOptimize(out.data());
  }
}

BENCHMARK(BM_gemm_nn<kernels::serial::gemm_nn>)->Name("gemm_nn/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_gemm_nn<kernels::parallel::gemm_nn>)->Name("gemm_nn/parallel")->Arg(64)->Arg(256);
BENCHMARK(BM_ghost_pair<kernels::serial::ghost_pair_layer>)->Name("ghost_pair/serial")->Arg(16)->Arg(64);
BENCHMARK(BM_ghost_pair<kernels::parallel::ghost_pair_layer>)->Name("ghost_pair/parallel")->Arg(16)->Arg(64);
BENCHMARK(BM_ghost_weighted<kernels::serial::ghost_weighted_block>)->Name("ghost_weighted/serial")->Arg(16)->Arg(64);
BENCHMARK(BM_ghost_weighted<kernels::parallel::ghost_weighted_block>)->Name("ghost_weighted/parallel")->Arg(16)->Arg(64);

}  // namespace

BENCHMARK_MAIN();
