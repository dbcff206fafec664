// Copyright 2026 The affkit Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "affkit/autodiff.hpp"
#include "affkit/error.hpp"
#include "affkit/gradcheck.hpp"
#include "affkit/optim.hpp"
#include "affkit/rng.hpp"

using namespace affkit;

namespace {

Tensor triple_loop(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor c({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a(i, p) * b(p, j);
      c(i, j) = s;
    }
  return c;
}

}  // namespace

TEST_CASE("tensor invariants") {
  Tensor t({2, 3, 4}, 1.5);
  CHECK(t.size() == 24);
  CHECK(numel(t.shape()) == t.size());
  CHECK(Tensor().size() == 1);
  CHECK_THROWS_AS(Tensor({2, 0}), DimensionError);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  CHECK(t.reshaped({6, 4}).shape() == Shape{6, 4});
  CHECK_THROWS_AS(t.reshaped({5, 5}), DimensionError);
}

TEST_CASE("matmul") {
  Tape tape;
  const Tensor m({2, 2}, {1, 2, 3, 4});
  CHECK(matmul(tape.leaf(Tensor::identity(2)), tape.leaf(m)).value() == m);
  CHECK(matmul(tape.leaf(Tensor::identity(2)), tape.leaf(Tensor({2, 2}))).value() == Tensor({2, 2}));

  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor a = Tensor::uniform({3, 4}, -2, 2, rng), b = Tensor::uniform({4, 2}, -2, 2, rng);
    CHECK(max_abs_diff(matmul(tape.leaf(a), tape.leaf(b)).value(), triple_loop(a, b)) <= 1e-12);
  }

  try {
    matmul(tape.leaf(Tensor({2, 3})), tape.leaf(Tensor({2, 3})));
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
  }
}

TEST_CASE("elementwise ops") {
  Tape tape;
  CHECK(sigmoid(tape.leaf(Tensor::scalar(0.0))).value().item() == 0.5);
  CHECK(tanh(tape.leaf(Tensor::scalar(0.0))).value().item() == 0.0);
  CHECK(relu(tape.leaf(Tensor::scalar(-3.2))).value().item() == 0.0);
  CHECK(relu(tape.leaf(Tensor::scalar(2.5))).value().item() == 2.5);
  CHECK_THROWS_AS(add(tape.leaf(Tensor({2})), tape.leaf(Tensor({3}))), DimensionError);
  CHECK_THROWS_AS(mul(tape.leaf(Tensor({2, 1})), tape.leaf(Tensor({2}))), DimensionError);

  Rng rng(3);
  const Tensor x = Tensor::uniform({50}, -40, 40, rng);
  const Tensor s = sigmoid(tape.leaf(x)).value(), t = tanh(tape.leaf(x)).value();
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(s[i] >= 0.0);
    CHECK(s[i] <= 1.0);
    CHECK(std::abs(t[i]) <= 1.0);
  }
  CHECK(sigmoid(tape.leaf(Tensor({3}, {-800, 0, 800}))).value().all_finite());
  CHECK(softmax(tape.leaf(Tensor({3}, {1000, 1000, 1000}))).value().all_finite());
}

TEST_CASE("add_bias broadcasts over the trailing axis only") {
  Tape tape;
  const Var y = add_bias(tape.leaf(Tensor({2, 3}, {1, 2, 3, 4, 5, 6})), tape.leaf(Tensor({3}, {10, 20, 30})));
  CHECK(y.value() == Tensor({2, 3}, {11, 22, 33, 14, 25, 36}));
  CHECK_THROWS_AS(add_bias(tape.leaf(Tensor({2, 3})), tape.leaf(Tensor({2}))), DimensionError);
}

TEST_CASE("backward basics") {
  {
    Tape tape;
    const Var x = tape.leaf(Tensor({2, 3}, 0.7));
    tape.backward(sum(x));
    CHECK(x.grad() == Tensor({2, 3}, 1.0));
  }
  {
    Tape tape;
    const Var x = tape.leaf(Tensor::scalar(3.0));
    tape.backward(x * x);
    CHECK(x.grad().item() == 6.0);
  }
  {
    Tape tape;
    const Var x = tape.leaf(Tensor({3}, 1.0));
    const Var unused = tape.leaf(Tensor({4}, 2.0));
    tape.backward(sum(square(x)));
    CHECK(unused.grad() == Tensor({4}));
  }
  {
    Tape tape;
    const Var x = tape.leaf(Tensor({3}, 1.0));
    CHECK_THROWS_AS(tape.backward(x), ContractViolation);
    CHECK_THROWS_AS(x.grad(), ContractViolation);
    const Var l = sum(x);
    tape.backward(l);
    CHECK_THROWS_AS(tape.backward(l), ContractViolation);
  }
}

TEST_CASE("backward visits operations in reverse order") {
  // The chain exp(exp(x)) is only correct when the outer node is processed
  // before the inner one.
  Tape tape;
  const Var x = tape.leaf(Tensor::scalar(0.3));
  const Var y = exp(exp(x));
  tape.backward(y);
  CHECK(x.grad().item() == doctest::Approx(std::exp(std::exp(0.3)) * std::exp(0.3)).epsilon(1e-14));
}

TEST_CASE("composite graph matches finite differences") {
  Rng rng(5);
  const auto r = gradcheck_inputs(
      "composite",
      [](Tape&, const std::vector<Var>& v) {
        return sum(tanh(matmul(v[0], v[1])) * sigmoid(matmul(v[0], v[2]))) + mean(softmax(v[0]));
      },
      {Tensor::uniform({3, 4}, -1, 1, rng), Tensor::uniform({4, 2}, -1, 1, rng), Tensor::uniform({4, 2}, -1, 1, rng)});
  CHECK(r.max_rel_error < kGradcheckTolerance);
}

TEST_CASE("full gradient suite") {
  for (const auto& r : run_gradcheck_suite(7)) {
    INFO(r.name);
    CHECK(r.max_rel_error < kGradcheckTolerance);
    CHECK(r.coordinates > 0);
  }
}

TEST_CASE("backward is linear") {
  Rng rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor x = Tensor::uniform({5}, -1, 1, rng);
    const double a = rng.uniform(-3, 3), b = rng.uniform(-3, 3);
    const auto f = [](Var v) { return sum(tanh(v) * v); };
    const auto g = [](Var v) { return sum(exp(v)); };
    const auto grad_of = [&](auto fn) {
      Tape tape;
      const Var v = tape.leaf(x);
      tape.backward(fn(v));
      return v.grad();
    };
    const Tensor gf = grad_of(f), gg = grad_of(g);
    const Tensor gc = grad_of([&](Var v) { return a * f(v) + b * g(v); });
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(gc[i] - (a * gf[i] + b * gg[i])) <= 1e-10);
  }
}

TEST_CASE("forward and backward are bit-deterministic") {
  const auto run = [] {
    Rng rng(99);
    Tape tape;
    const Var a = tape.leaf(Tensor::uniform({4, 3}, -1, 1, rng));
    const Var b = tape.leaf(Tensor::uniform({3, 2}, -1, 1, rng));
    const Var l = sum(sigmoid(matmul(a, b)));
    tape.backward(l);
    return std::make_tuple(l.value(), a.grad(), b.grad());
  };
  CHECK(run() == run());
}

TEST_CASE("parameters accumulate gradients") {
  ParameterSet params;
  Parameter& w = params.add("w", Tensor({2}, {1.0, 2.0}));
  CHECK_THROWS_AS(params.add("w", Tensor({1})), ContractViolation);
  for (int i = 0; i < 2; ++i) {
    Tape tape;
    const Var v = tape.parameter(w);
    CHECK(tape.parameter(w).id() == v.id());
    tape.backward(sum(v * v));
  }
  CHECK(w.grad == Tensor({2}, {4.0, 8.0}));
  params.zero_grad();
  CHECK(w.grad == Tensor({2}));
}

TEST_CASE("adam") {
  ParameterSet params;
  Parameter& w = params.add("w", Tensor({2}, {1.0, -1.0}));
  w.grad = Tensor({2}, {0.5, -0.25});
  Adam adam(params, {0.1, 0.9, 0.999, 1e-8});
  adam.step();
  // First step with bias correction: m_hat = g, v_hat = g^2.
  CHECK(std::abs(w.value[0] - (1.0 - 0.1 * 0.5 / (0.5 + 1e-8))) <= 1e-15);
  CHECK(std::abs(w.value[1] - (-1.0 + 0.1 * 0.25 / (0.25 + 1e-8))) <= 1e-15);

  ParameterSet frozen;
  Parameter& p = frozen.add("p", Tensor({3}, {1, 2, 3}));
  p.grad = Tensor({3}, {1, 1, 1});
  Adam zero(frozen, {0.0});
  zero.step();
  CHECK(p.value == Tensor({3}, {1, 2, 3}));
}
