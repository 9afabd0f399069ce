// SPDX-License-Identifier: Apache-2.0
// Serial reference kernels against the OpenMP versions.
#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "geomanifold/kernels.hpp"
#include "geomanifold/rng.hpp"

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  gm::Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_values(n * n, 1), b = random_values(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel)
      gm::kernels::gemm(a.data(), b.data(), c.data(), n, n, n, false, false);
    else
      gm::kernels::serial::gemm(a.data(), b.data(), c.data(), n, n, n, false, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(2 * n * n * n));
}

template <bool Parallel>
void BM_Pairwise(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::size_t d = 64;
  auto pts = random_values(n * d, 3);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < d; ++j) s += pts[i * d + j] * pts[i * d + j];
    for (std::size_t j = 0; j < d; ++j) pts[i * d + j] /= std::sqrt(s);
  }
  std::vector<double> out(n * n);
  for (auto _ : state) {
    if constexpr (Parallel)
      gm::kernels::pairwise_distance(gm::Geometry::sphere, pts.data(), n, d, out.data());
    else
      gm::kernels::serial::pairwise_distance(gm::Geometry::sphere, pts.data(), n, d, out.data());
    benchmark::DoNotOptimize(out.data());
  }
}

}  // namespace

BENCHMARK(BM_Gemm<false>)->Arg(64)->Arg(256)->Arg(512)->Name("gemm/serial");
BENCHMARK(BM_Gemm<true>)->Arg(64)->Arg(256)->Arg(512)->Name("gemm/openmp");
BENCHMARK(BM_Pairwise<false>)->Arg(128)->Arg(512)->Name("pairwise_sphere/serial");
BENCHMARK(BM_Pairwise<true>)->Arg(128)->Arg(512)->Name("pairwise_sphere/openmp");

BENCHMARK_MAIN();
