// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <array>
#include <cmath>
#include <numbers>

#include "geomanifold/error.hpp"
#include "test_util.hpp"

using namespace gm;
using gmtest::random_tensor;

TEST_CASE("matmul by identity") {
  Tape t;
  Var a = t.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  Var i = t.constant(Tensor::matrix(2, 2, {1, 0, 0, 1}));
  CHECK(matmul(a, i).value().identical(a.value()));
}

TEST_CASE("softmax of equal logits is uniform") {
  Tape t;
  Var s = softmax_rows(t.constant(Tensor::matrix(1, 2, {0, 0})));
  CHECK(s.value()[0] == 0.5);
  CHECK(s.value()[1] == 0.5);
}

TEST_CASE("silu(0) is 0") {
  Tape t;
  CHECK(silu(t.constant(Tensor::scalar(0.0))).value()[0] == 0.0);
}

TEST_CASE("shape errors name the operator and both shapes") {
  Tape t;
  Var a = t.constant(Tensor::zeros(2, 3));
  Var b = t.constant(Tensor::zeros(2, 3));
  try {
    matmul(a, b);
    FAIL("expected a shape error");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("[2x3]") != std::string::npos);
  }
  CHECK_THROWS_AS(add(a, t.constant(Tensor::zeros(3, 2))), ShapeError);
}

TEST_CASE("square has derivative 2w") {
  Parameter w{"w", Tensor::scalar(3.0)};
  Tape t;
  t.backprop(square(t.param(w)));
  CHECK(w.value.grad()[0] == doctest::Approx(6.0));
}

TEST_CASE("unused parameters get exact zero gradients") {
  Parameter w{"w", Tensor::scalar(3.0)};
  Tape t;
  Var unused = t.param(w);
  (void)unused;
  Var c = t.input(Tensor::scalar(5.0));
  t.backprop(c);
  CHECK(t.gradient(t.param(w))[0] == 0.0);
  CHECK_FALSE(w.value.has_grad());
}

TEST_CASE("seed shape must match output") {
  Tape t;
  Var x = t.input(Tensor::zeros(2, 2));
  CHECK_THROWS_AS(t.backprop(exp(x), Tensor::zeros(1, 2)), ShapeError);
  CHECK_THROWS_AS(t.backprop(exp(x)), ShapeError);
}

TEST_CASE("softmax composite matches central differences within 1e-6") {
  Rng rng(11);
  std::vector<Parameter> ps{{"w", random_tensor(3, 4, rng)}};
  auto loss = [&](Tape& t) {
    Var w = t.param(ps[0]);
    return sum(mul(softmax_rows(w), tanh(w)));
  };
  const auto r = finite_diff_check(loss, gmtest::ptrs(ps), {.tolerance = 1e-6});
  CHECK(r.passed);
  CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("softmax rows sum to one with entries inside (0, 1)") {
  Rng rng(3);
  Tape t;
  Var s = softmax_rows(t.constant(random_tensor(5, 7, rng, -30, 30)));
  for (std::size_t r = 0; r < 5; ++r) {
    double total = 0;
    for (double v : s.value().row(r)) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
      total += v;
    }
    CHECK(std::abs(total - 1.0) <= 1e-12);
  }
}

TEST_CASE("forward evaluation is deterministic") {
  Rng rng(5);
  const Tensor x = random_tensor(6, 4, rng), w = random_tensor(4, 3, rng);
  auto run = [&] {
    Tape t;
    return layer_norm_rows(gelu(matmul(t.constant(x), t.constant(w)))).value();
  };
  CHECK(run().identical(run()));
}

namespace {

struct OpCase {
  const char* name;
  std::size_t a_rows, a_cols, b_rows, b_cols;  // b unused when b_rows == 0
  double lo, hi;
  std::function<Var(Var, Var)> f;
};

Var sphere_rows(Var a) { return project_rows(a, Geometry::sphere); }

}  // namespace

TEST_CASE("every operator matches central differences at 20 random points") {
  const std::vector<OpCase> cases = {
      {"matmul", 3, 4, 4, 2, -1, 1, [](Var a, Var b) { return matmul(a, b); }},
      {"matmul_nt", 3, 4, 2, 4, -1, 1, [](Var a, Var b) { return matmul_nt(a, b); }},
      {"transpose", 3, 2, 0, 0, -1, 1, [](Var a, Var) { return transpose(a); }},
      {"reshape", 3, 2, 0, 0, -1, 1, [](Var a, Var) { return reshape(a, 2, 3); }},
      {"add", 3, 2, 1, 2, -1, 1, [](Var a, Var b) { return add(a, b); }},
      {"sub", 3, 2, 3, 1, -1, 1, [](Var a, Var b) { return sub(a, b); }},
      {"mul", 3, 2, 3, 2, -1, 1, [](Var a, Var b) { return mul(a, b); }},
      {"div", 3, 2, 3, 2, 0.5, 2, [](Var a, Var b) { return div(a, b); }},
      {"scale", 2, 2, 0, 0, -1, 1, [](Var a, Var) { return scale(a, -1.7); }},
      {"add_scalar", 2, 2, 0, 0, -1, 1, [](Var a, Var) { return add_scalar(a, 0.3); }},
      {"exp", 2, 3, 0, 0, -1, 1, [](Var a, Var) { return exp(a); }},
      {"log", 2, 3, 0, 0, 0.5, 2, [](Var a, Var) { return log(a); }},
      {"tanh", 2, 3, 0, 0, -2, 2, [](Var a, Var) { return tanh(a); }},
      {"sigmoid", 2, 3, 0, 0, -3, 3, [](Var a, Var) { return sigmoid(a); }},
      {"silu", 2, 3, 0, 0, -3, 3, [](Var a, Var) { return silu(a); }},
      {"gelu", 2, 3, 0, 0, -3, 3, [](Var a, Var) { return gelu(a); }},
      {"square", 2, 3, 0, 0, -2, 2, [](Var a, Var) { return square(a); }},
      {"sqrt", 2, 3, 0, 0, 0.5, 2, [](Var a, Var) { return sqrt(a); }},
      {"clamp", 2, 3, 0, 0, -0.9, 0.9, [](Var a, Var) { return clamp(a, -1.0, 1.0); }},
      {"softmax_rows", 3, 4, 0, 0, -2, 2, [](Var a, Var) { return softmax_rows(a); }},
      {"log_softmax_rows", 3, 4, 0, 0, -2, 2, [](Var a, Var) { return log_softmax_rows(a); }},
      {"layer_norm_rows", 3, 5, 0, 0, -2, 2, [](Var a, Var) { return layer_norm_rows(a); }},
      {"concat_cols", 2, 3, 2, 2, -1, 1,
       [](Var a, Var b) {
         const std::array<Var, 2> p{a, b};
         return concat_cols(p);
       }},
      {"concat_rows", 2, 3, 1, 3, -1, 1,
       [](Var a, Var b) {
         const std::array<Var, 2> p{a, b};
         return concat_rows(p);
       }},
      {"slice_cols", 3, 4, 0, 0, -1, 1, [](Var a, Var) { return slice_cols(a, 1, 2); }},
      {"slice_rows", 4, 3, 0, 0, -1, 1, [](Var a, Var) { return slice_rows(a, 1, 2); }},
      {"take_rows", 3, 2, 0, 0, -1, 1,
       [](Var a, Var) {
         const std::array<std::size_t, 4> idx{2, 0, 2, 1};
         return take_rows(a, idx);
       }},
      {"sum", 2, 3, 0, 0, -1, 1, [](Var a, Var) { return sum(square(a)); }},
      {"sum_rows", 2, 3, 0, 0, -1, 1, [](Var a, Var) { return sum_rows(a); }},
      {"sum_cols", 2, 3, 0, 0, -1, 1, [](Var a, Var) { return sum_cols(a); }},
      {"mean", 2, 3, 0, 0, -1, 1, [](Var a, Var) { return mean(square(a)); }},
      {"norm_rows", 3, 4, 0, 0, -1, 1, [](Var a, Var) { return norm_rows(a); }},
      {"project_sphere", 3, 4, 0, 0, -1, 1, [](Var a, Var) { return sphere_rows(a); }},
      {"project_poincare", 3, 4, 0, 0, -1, 1,
       [](Var a, Var) { return project_rows(a, Geometry::poincare, 0.2); }},
      {"pairwise_sphere", 4, 3, 0, 0, -1, 1,
       [](Var a, Var) { return pairwise_distance(sphere_rows(a), Geometry::sphere); }},
      {"pairwise_poincare", 4, 3, 0, 0, -0.4, 0.4,
       [](Var a, Var) { return pairwise_distance(a, Geometry::poincare); }},
      {"pairwise_euclidean", 4, 3, 0, 0, -1, 1,
       [](Var a, Var) { return pairwise_distance(a, Geometry::euclidean); }},
      {"row_distance_sphere", 3, 4, 3, 4, -1, 1,
       [](Var a, Var b) { return row_distance(sphere_rows(a), sphere_rows(b), Geometry::sphere); }},
      {"row_distance_poincare", 3, 4, 3, 4, -0.4, 0.4,
       [](Var a, Var b) { return row_distance(a, b, Geometry::poincare); }},
  };
  for (const auto& c : cases) {
    CAPTURE(c.name);
    Rng rng(std::hash<std::string>{}(c.name));
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<Parameter> ps{{"a", random_tensor(c.a_rows, c.a_cols, rng, c.lo, c.hi)}};
      if (c.b_rows > 0) ps.push_back({"b", random_tensor(c.b_rows, c.b_cols, rng, c.lo, c.hi)});
      auto loss = [&](Tape& t) {
        Var a = t.param(ps[0]);
        Var b = ps.size() > 1 ? t.param(ps[1]) : Var{};
        return gmtest::weighted_sum(c.f(a, b));
      };
      const auto r = finite_diff_check(loss, gmtest::ptrs(ps), {.tolerance = 1e-4});
      worst = std::max(worst, r.max_rel_error);
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("frozen parameters behave as constants") {
  Parameter w{"w", Tensor::scalar(2.0), false};
  Tape t;
  Var x = t.param(w);
  CHECK_FALSE(t.requires_grad(x));
  t.backprop(square(add(x, t.input(Tensor::scalar(1.0)))));
  CHECK_FALSE(w.value.has_grad());
}

TEST_CASE("truncate drops nodes and the parameter cache") {
  Parameter w{"w", Tensor::scalar(2.0)};
  Tape t;
  const std::size_t mark = t.size();
  Var a = t.param(w);
  (void)exp(a);
  t.truncate(mark);
  CHECK(t.size() == mark);
  Var b = t.param(w);
  t.backprop(square(b));
  CHECK(w.value.grad()[0] == doctest::Approx(4.0));
}

TEST_CASE("project_rows rejects a zero row on the sphere") {
  Tape t;
  CHECK_THROWS_AS(project_rows(t.constant(Tensor::zeros(1, 3)), Geometry::sphere),
                  DegenerateInputError);
}
