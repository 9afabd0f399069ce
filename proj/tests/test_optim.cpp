// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <limits>

#include "geomanifold/error.hpp"
#include "geomanifold/optim.hpp"
#include "geomanifold/parameters.hpp"
#include "test_util.hpp"

using namespace gm;

namespace {

Parameter scalar_param(double w, double g) {
  Parameter p{"w", Tensor::scalar(w)};
  p.value.zero_grad();
  p.value.grad()[0] = g;
  return p;
}

}  // namespace

TEST_CASE("zero gradient and zero decay leave parameters unchanged") {
  Parameter p = scalar_param(1.0, 0.0);
  AdamWState st;
  st.config.weight_decay = 0.0;
  std::array<Parameter*, 1> ps{&p};
  adamw_step(ps, st);
  CHECK(p.value[0] == 1.0);
  CHECK(st.step == 1);
}

TEST_CASE("first AdamW step moves by lr / (1 + eps)") {
  Parameter p = scalar_param(0.5, 1.0);
  AdamWState st;
  st.config = {.lr = 0.1, .beta1 = 0.9, .beta2 = 0.999, .eps = 1e-8, .weight_decay = 0.0};
  std::array<Parameter*, 1> ps{&p};
  adamw_step(ps, st);
  // m_hat = 1, v_hat = 1
  CHECK(p.value[0] == doctest::Approx(0.5 - 0.1 / (1.0 + 1e-8)).epsilon(1e-14));
  CHECK(st.step == 1);
  CHECK(st.m[0][0] == doctest::Approx(0.1));
  CHECK(st.v[0][0] == doctest::Approx(0.001));
}

TEST_CASE("decay multiplies the parameter") {
  Parameter p = scalar_param(1.0, 0.0);
  AdamWState st;
  st.config.lr = 0.1;
  st.config.weight_decay = 0.1;
  std::array<Parameter*, 1> ps{&p};
  adamw_step(ps, st);
  CHECK(p.value[0] == doctest::Approx(0.99).epsilon(1e-15));
}

TEST_CASE("non-finite gradient names the parameter and changes nothing") {
  Parameter good = scalar_param(1.0, 1.0);
  Parameter bad = scalar_param(2.0, std::numeric_limits<double>::quiet_NaN());
  bad.name = "enc.weight";
  AdamWState st;
  std::array<Parameter*, 2> ps{&good, &bad};
  try {
    adamw_step(ps, st);
    FAIL("expected a training error");
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).find("enc.weight") != std::string::npos);
  }
  CHECK(good.value[0] == 1.0);
}

TEST_CASE("AdamW fits a linear layer") {
  Rng rng(4);
  ParameterStore store;
  Linear lin = Linear::create(store, "lin", 3, 1, rng);
  const Tensor x = gmtest::random_tensor(16, 3, rng);
  Tensor y = Tensor::zeros(16, 1);
  for (std::size_t i = 0; i < 16; ++i) y[i] = 2 * x.at(i, 0) - x.at(i, 1) + 0.5;
  AdamWState st;
  st.config.lr = 0.05;
  st.config.weight_decay = 0.0;
  double first = 0, last = 0;
  for (int it = 0; it < 300; ++it) {
    Tape t;
    Var loss = mean(square(sub(lin(t, t.constant(x)), t.constant(y))));
    if (it == 0) first = loss.value()[0];
    last = loss.value()[0];
    store.zero_grad();
    t.backprop(loss);
    auto ps = store.all();
    adamw_step(ps, st);
  }
  CHECK(last < 1e-3 * first);
}

TEST_CASE("gradient check: linear layer with mean-square loss") {
  Rng rng(8);
  ParameterStore store;
  Linear lin = Linear::create(store, "lin", 4, 3, rng);
  const Tensor x = gmtest::random_tensor(5, 4, rng), y = gmtest::random_tensor(5, 3, rng);
  auto loss = [&](Tape& t) { return mean(square(sub(lin(t, t.constant(x)), t.constant(y)))); };
  auto ps = store.all();
  const auto r = finite_diff_check(loss, ps, {.tolerance = 1e-6});
  CHECK(r.passed);
  CHECK(r.max_rel_error < 1e-6);
  CHECK(r.coords_checked == 4 * 3 + 3);
}

TEST_CASE("gradient check with no parameters passes vacuously") {
  auto loss = [](Tape& t) { return t.constant(Tensor::scalar(1.0)); };
  const auto r = finite_diff_check(loss, std::span<Parameter* const>{});
  CHECK(r.passed);
  CHECK(r.coords_checked == 0);
}

TEST_CASE("parameter store rejects duplicates") {
  ParameterStore s;
  s.add("a", Tensor::scalar(1));
  CHECK_THROWS_AS(s.add("a", Tensor::scalar(2)), UsageError);
}
