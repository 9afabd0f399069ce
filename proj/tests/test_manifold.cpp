// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "geomanifold/error.hpp"
#include "geomanifold/manifold.hpp"
#include "geomanifold/rng.hpp"

using namespace gm;
using std::numbers::pi;

namespace {

const ManifoldKind sphere3{ManifoldType::hypersphere, 3, 1e-5};
const ManifoldKind ball2{ManifoldType::poincare_ball, 2, 1e-5};

std::vector<double> gaussian(std::size_t d, Rng& rng, double sd = 1.0) {
  std::vector<double> v(d);
  for (auto& x : v) x = sd * rng.normal();
  return v;
}

double norm(std::span<const double> v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("projection examples") {
  const ManifoldKind s2{ManifoldType::hypersphere, 2, 1e-5};
  auto p = project(s2, std::vector<double>{3, 4});
  CHECK(p.coords()[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(p.coords()[1] == doctest::Approx(0.8).epsilon(1e-15));

  auto q = project(ball2, std::vector<double>{2, 0});
  CHECK(q.coords()[0] == doctest::Approx(0.99999).epsilon(1e-15));
  CHECK(q.coords()[1] == 0.0);

  auto r = project(ball2, std::vector<double>{0.3, 0.1});
  CHECK(r.coords()[0] == 0.3);
  CHECK(r.coords()[1] == 0.1);

  CHECK_THROWS_AS(project(s2, std::vector<double>{0, 0}), DegenerateInputError);
}

TEST_CASE("kind validation") {
  CHECK_THROWS_AS((ManifoldKind{ManifoldType::hypersphere, 1, 1e-5}.validate()), UsageError);
  CHECK_THROWS_AS((ManifoldKind{ManifoldType::poincare_ball, 3, 0.0}.validate()), UsageError);
  CHECK_THROWS_AS((ManifoldKind{ManifoldType::poincare_ball, 3, 0.02}.validate()), UsageError);
  CHECK_NOTHROW(sphere3.validate());
  CHECK_THROWS_AS(ManifoldPoint::from_coords(sphere3, {1, 1, 0}), UsageError);
}

TEST_CASE("distance examples") {
  auto e1 = project(sphere3, std::vector<double>{1, 0, 0});
  auto e2 = project(sphere3, std::vector<double>{0, 1, 0});
  auto m1 = project(sphere3, std::vector<double>{-1, 0, 0});
  CHECK(geodesic_distance(e1, e2) == doctest::Approx(pi / 2).epsilon(1e-15));
  CHECK(geodesic_distance(e1, m1) == doctest::Approx(pi).epsilon(1e-15));

  auto o = project(ball2, std::vector<double>{0, 0});
  auto h = project(ball2, std::vector<double>{0.5, 0});
  CHECK(geodesic_distance(o, h) == doctest::Approx(2 * std::atanh(0.5)).epsilon(1e-14));
  CHECK(geodesic_distance(o, h) == doctest::Approx(1.098612).epsilon(1e-6));

  CHECK_THROWS_AS(geodesic_distance(o, e1), UsageError);
}

TEST_CASE("exp and log examples") {
  auto e1 = project(sphere3, std::vector<double>{1, 0, 0});
  auto z = exp_map(e1, std::vector<double>{0, 0, 0});
  CHECK(z.coords()[0] == 1.0);
  auto e2 = exp_map(e1, std::vector<double>{0, pi / 2, 0});
  CHECK(std::abs(e2.coords()[0]) < 1e-15);
  CHECK(e2.coords()[1] == doctest::Approx(1.0).epsilon(1e-15));

  auto l = log_map(e1, project(sphere3, std::vector<double>{0, 1, 0}));
  CHECK(std::abs(l[0]) < 1e-15);
  CHECK(l[1] == doctest::Approx(pi / 2).epsilon(1e-15));

  auto same = log_map(e2, e2);
  CHECK(norm(same) == 0.0);

  CHECK_THROWS_AS(log_map(e1, project(sphere3, std::vector<double>{-1, 0, 0})), SingularityError);

  auto o = project(ball2, std::vector<double>{0, 0});
  const std::vector<double> v{0.03, -0.04};
  auto p = exp_map(o, v);
  const double s = std::tanh(0.05) / 0.05;
  CHECK(p.coords()[0] == doctest::Approx(0.03 * s).epsilon(1e-14));
  CHECK(p.coords()[1] == doctest::Approx(-0.04 * s).epsilon(1e-14));
}

TEST_CASE("exp/log roundtrip on random pairs") {
  Rng rng(21);
  for (const ManifoldKind& k : {sphere3, ManifoldKind{ManifoldType::poincare_ball, 4, 1e-5}}) {
    double worst = 0;
    for (int i = 0; i < 100; ++i) {
      const double sd = k.type == ManifoldType::hypersphere ? 1.0 : 0.3;
      auto x = project(k, gaussian(k.dim, rng, sd));
      auto y = project(k, gaussian(k.dim, rng, sd));
      auto v = log_map(x, y);
      auto y2 = exp_map(x, v);
      for (std::size_t j = 0; j < k.dim; ++j)
        worst = std::max(worst, std::abs(y2.coords()[j] - y.coords()[j]));
      CHECK(tangent_norm(x, v) == doctest::Approx(geodesic_distance(x, y)).epsilon(1e-8));
    }
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("pairwise examples") {
  std::vector<ManifoldPoint> one{project(sphere3, std::vector<double>{0, 0, 1})};
  auto d1 = pairwise_geodesic(one);
  CHECK(d1.size() == 1);
  CHECK(d1[0] == 0.0);

  std::vector<ManifoldPoint> pts{project(sphere3, std::vector<double>{1, 0, 0}),
                                 project(sphere3, std::vector<double>{0, 1, 0}),
                                 project(sphere3, std::vector<double>{-1, 0, 0})};
  auto d = pairwise_geodesic(pts);
  const double want[9] = {0, pi / 2, pi, pi / 2, 0, pi / 2, pi, pi / 2, 0};
  for (int i = 0; i < 9; ++i) CHECK(d[i] == doctest::Approx(want[i]).epsilon(1e-15));

  Rng rng(5);
  std::vector<ManifoldPoint> cloud;
  for (int i = 0; i < 12; ++i) cloud.push_back(project(ball2, gaussian(2, rng, 0.4)));
  auto dc = pairwise_geodesic(cloud);
  for (std::size_t i = 0; i < 12; ++i)
    for (std::size_t j = 0; j < 12; ++j)
      CHECK(dc.at(i, j) == doctest::Approx(geodesic_distance(cloud[i], cloud[j])).epsilon(1e-14));
}

TEST_CASE("projection is idempotent and lands on the manifold") {
  Rng rng(1);
  for (const ManifoldKind& k : {ManifoldKind{ManifoldType::hypersphere, 8, 1e-5},
                                ManifoldKind{ManifoldType::poincare_ball, 8, 1e-5}}) {
    for (int i = 0; i < 2000; ++i) {
      auto p = project(k, gaussian(k.dim, rng, 0.6));
      CHECK(on_manifold(k, p.coords()));
      auto q = project(k, p.coords());
      for (std::size_t j = 0; j < k.dim; ++j) {
        if (k.type == ManifoldType::hypersphere)
          CHECK(q.coords()[j] == p.coords()[j]);
        else
          CHECK(std::abs(q.coords()[j] - p.coords()[j]) <= 1e-12);
      }
    }
  }
}

TEST_CASE("metric axioms on random triples") {
  Rng rng(2);
  for (const ManifoldKind& k : {ManifoldKind{ManifoldType::hypersphere, 5, 1e-5},
                                ManifoldKind{ManifoldType::poincare_ball, 5, 1e-5}}) {
    for (int i = 0; i < 1000; ++i) {
      auto x = project(k, gaussian(k.dim, rng, 0.5));
      auto y = project(k, gaussian(k.dim, rng, 0.5));
      auto z = project(k, gaussian(k.dim, rng, 0.5));
      CHECK(std::abs(geodesic_distance(x, y) - geodesic_distance(y, x)) <= 1e-12);
      CHECK(geodesic_distance(x, x) == 0.0);
      CHECK(geodesic_distance(x, z) <= geodesic_distance(x, y) + geodesic_distance(y, z) + 1e-9);
    }
  }
}
