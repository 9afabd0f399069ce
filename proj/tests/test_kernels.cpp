// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <omp.h>

#include <cstring>

#include "geomanifold/kernels.hpp"
#include "test_util.hpp"

using namespace gm;

namespace {

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

std::vector<double> values(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-0.6, 0.6);
  return v;
}

}  // namespace

TEST_CASE("gemm matches the serial reference bit for bit") {
  Rng rng(1);
  for (bool ta : {false, true})
    for (bool tb : {false, true}) {
      const std::size_t m = 70, n = 90, k = 60;
      const auto a = values(m * k, rng), b = values(k * n, rng);
      std::vector<double> c1(m * n), c2(m * n);
      kernels::gemm(a.data(), b.data(), c1.data(), m, n, k, ta, tb);
      kernels::serial::gemm(a.data(), b.data(), c2.data(), m, n, k, ta, tb);
      CHECK(same_bits(c1, c2));
    }
}

TEST_CASE("gemm agrees with a naive triple loop") {
  Rng rng(2);
  const std::size_t m = 3, n = 4, k = 5;
  const auto a = values(m * k, rng), b = values(k * n, rng);
  std::vector<double> c(m * n);
  kernels::gemm(a.data(), b.data(), c.data(), m, n, k, false, false);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      CHECK(c[i * n + j] == doctest::Approx(s).epsilon(1e-14));
    }
}

TEST_CASE("pairwise distance kernels are thread-count independent") {
  Rng rng(3);
  const std::size_t n = 200, d = 16;
  for (Geometry g : {Geometry::sphere, Geometry::poincare, Geometry::euclidean}) {
    auto pts = values(n * d, rng);
    if (g == Geometry::sphere)
      for (std::size_t i = 0; i < n; ++i) {
        double s = 0;
        for (std::size_t j = 0; j < d; ++j) s += pts[i * d + j] * pts[i * d + j];
        for (std::size_t j = 0; j < d; ++j) pts[i * d + j] /= std::sqrt(s);
      }
    if (g == Geometry::poincare)
      for (auto& v : pts) v *= 0.2;
    std::vector<double> o1(n * n), o2(n * n), o3(n * n);
    kernels::serial::pairwise_distance(g, pts.data(), n, d, o1.data());
    omp_set_num_threads(1);
    kernels::pairwise_distance(g, pts.data(), n, d, o2.data());
    omp_set_num_threads(4);
    kernels::pairwise_distance(g, pts.data(), n, d, o3.data());
    CHECK(same_bits(o1, o2));
    CHECK(same_bits(o1, o3));

    const auto up = values(n * n, rng);
    std::vector<double> g1(n * d), g2(n * d);
    kernels::serial::pairwise_distance_backward(g, pts.data(), up.data(), n, d, g1.data());
    kernels::pairwise_distance_backward(g, pts.data(), up.data(), n, d, g2.data());
    CHECK(same_bits(g1, g2));
  }
}
