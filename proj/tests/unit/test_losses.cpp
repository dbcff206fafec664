// Copyright 2026 The affkit Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "affkit/error.hpp"
#include "affkit/gradcheck.hpp"
#include "affkit/layers.hpp"
#include "affkit/losses.hpp"
#include "affkit/rng.hpp"

using namespace affkit;
using namespace affkit::loss;

namespace {

Tensor random_distribution(std::size_t k, Rng& rng) {
  Tensor p({k});
  double s = 0;
  for (double& v : p.data()) s += (v = rng.uniform(0.05, 1.0));
  for (double& v : p.data()) v /= s;
  return p;
}

Tensor pixel_distributions(std::size_t C, std::size_t H, std::size_t W, Rng& rng) {
  Tape tape;
  return nn::softmax_channels(tape.leaf(Tensor::uniform({C, H, W}, -2, 2, rng))).value();
}

double g(double x) { return std::abs(x) < 1 ? 0.5 * x * x : std::abs(x) - 0.5; }

}  // namespace

TEST_CASE("ce_class") {
  Tape tape;
  CHECK(ce_class(tape.leaf(Tensor({3}, {0, 1, 0})), 1).value().item() == 0.0);
  CHECK(ce_class(tape.leaf(Tensor({2}, {0.5, 0.5})), 0).value().item() == doctest::Approx(0.693147180559945));
  CHECK(ce_class(tape.leaf(Tensor({2}, {1, 0})), 1).value().item() == doctest::Approx(12 * std::log(10.0)));
  CHECK_THROWS_AS(ce_class(tape.leaf(Tensor({2}, {0.5, 0.5})), 2), ContractViolation);
}

TEST_CASE("smooth_l1") {
  CHECK(smooth_l1(0.5) == 0.125);
  CHECK(smooth_l1(2.0) == 1.5);
  CHECK(smooth_l1(-2.0) == 1.5);
  // Both branches meet with value 0.5 and slope 1 at |x| = 1.
  for (double s : {1.0, -1.0}) {
    const double eps = 1e-7;
    CHECK(std::abs(smooth_l1(s * (1 - eps)) - smooth_l1(s * (1 + eps))) <= 1e-6);
    CHECK(smooth_l1(s) == 0.5);
    const double left = (smooth_l1(s * (1 - eps)) - smooth_l1(s * (1 - 2 * eps))) / eps;
    const double right = (smooth_l1(s * (1 + 2 * eps)) - smooth_l1(s * (1 + eps))) / eps;
    CHECK(left == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(right == doctest::Approx(1.0).epsilon(1e-5));
  }
  Tape tape;
  const det::BoxOffset v{0.1, -0.2, 0.3, 0.0};
  CHECK(smooth_l1(tape.leaf(Tensor({4}, {0.1, -0.2, 0.3, 0.0})), v).value().item() == 0.0);
  CHECK(smooth_l1(tape.leaf(Tensor({4}, {0.6, -0.2, 0.3, 0.0})), v).value().item() == doctest::Approx(0.125));
  CHECK(smooth_l1(tape.leaf(Tensor({4}, {0.1, 1.8, 0.3, 0.0})), v).value().item() == doctest::Approx(1.5));
  CHECK_THROWS_AS(smooth_l1(tape.leaf(Tensor({3})), v), DimensionError);

  Rng rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor t = Tensor::uniform({4}, -3, 3, rng);
    const det::BoxOffset r{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const double want = g(t[0] - r.tx) + g(t[1] - r.ty) + g(t[2] - r.tw) + g(t[3] - r.th);
    CHECK(std::abs(smooth_l1(tape.leaf(t), r).value().item() - want) <= 1e-12);
  }
}

TEST_CASE("aff_mask_loss") {
  Tape tape;
  LabelGrid s(2, 3);
  s.labels = {0, 1, 2, 2, 1, 0};
  Tensor onehot({3, 2, 3});
  for (std::size_t i = 0; i < 6; ++i) onehot[static_cast<std::size_t>(s.labels[i]) * 6 + i] = 1.0;
  CHECK(aff_mask_loss(tape.leaf(onehot), s).value().item() == 0.0);
  CHECK(aff_mask_loss(tape.leaf(Tensor({4, 2, 3}, 0.25)), s).value().item() == doctest::Approx(std::log(4.0)));
  CHECK_THROWS_AS(aff_mask_loss(tape.leaf(Tensor({3, 3, 3}, 1.0 / 3)), s), DimensionError);

  Rng rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor m = pixel_distributions(3, 5, 4, rng);
    LabelGrid t(5, 4);
    for (int& v : t.labels) v = static_cast<int>(rng.below(3));
    double direct = 0;
    for (std::size_t i = 0; i < 20; ++i) direct -= std::log(m[static_cast<std::size_t>(t.labels[i]) * 20 + i]);
    CHECK(aff_mask_loss(tape.leaf(m), t).value().item() == doctest::Approx(direct / 20).epsilon(1e-12));
  }
}

TEST_CASE("detection_joint_loss") {
  Rng rng(42);
  const Tensor p = random_distribution(4, rng);
  const Tensor t = Tensor::uniform({4}, -2, 2, rng);
  const Tensor m = pixel_distributions(3, 6, 6, rng);
  DetectionTarget target;
  target.s = LabelGrid(6, 6);

  {
    Tape tape;
    Var vp = tape.leaf(p), vt = tape.leaf(t), vm = tape.leaf(m);
    Var l = detection_joint_loss(vp, vt, vm, target);
    CHECK(l.value().item() == doctest::Approx(-std::log(p[0])));
    tape.backward(l);
    CHECK(vt.grad() == Tensor({4}));
    CHECK(vm.grad() == Tensor(m.shape()));
    Tape bare;
    CHECK(detection_joint_loss(bare.leaf(p), Var(), Var(), target).value().item() ==
          doctest::Approx(-std::log(p[0])));
  }

  target.u = 2;
  target.v = {0.3, -0.4, 1.7, -0.1};
  for (int& v : target.s.labels) v = static_cast<int>(rng.below(3));
  {
    Tape tape;
    const double expected = ce_class(tape.leaf(p), 2).value().item() +
                            smooth_l1(tape.leaf(t), target.v).value().item() +
                            aff_mask_loss(tape.leaf(m), target.s).value().item();
    CHECK(detection_joint_loss(tape.leaf(p), tape.leaf(t), tape.leaf(m), target).value().item() ==
          doctest::Approx(expected).epsilon(1e-14));
  }
  {
    Tape tape;
    Tensor perfect_p({4});
    perfect_p[2] = 1.0;
    Tensor perfect_m({3, 6, 6});
    for (std::size_t i = 0; i < 36; ++i) perfect_m[static_cast<std::size_t>(target.s.labels[i]) * 36 + i] = 1.0;
    const Tensor perfect_t({4}, {0.3, -0.4, 1.7, -0.1});
    CHECK(detection_joint_loss(tape.leaf(perfect_p), tape.leaf(perfect_t), tape.leaf(perfect_m), target)
              .value()
              .item() == 0.0);
  }
}

TEST_CASE("seq_nll") {
  Tape tape;
  const std::vector<std::size_t> targets{3, 1, 4, 0, 0};
  const bool real[] = {true, true, true, false, false};
  CHECK(seq_nll(tape.leaf(Tensor({5, 10}, 0.1)), targets, real).value().item() ==
        doctest::Approx(3 * std::log(10.0)));
  const bool none[] = {false, false, false, false, false};
  CHECK(seq_nll(tape.leaf(Tensor({5, 10}, 0.1)), targets, none).value().item() == 0.0);
  Tensor perfect({5, 10});
  for (std::size_t i = 0; i < 5; ++i) perfect(i, targets[i]) = 1.0;
  CHECK(seq_nll(tape.leaf(perfect), targets, real).value().item() == 0.0);
  CHECK_THROWS_AS(seq_nll(tape.leaf(Tensor({4, 10}, 0.1)), targets, real), DimensionError);
}

TEST_CASE("action_sigmoid_ce") {
  Tape tape;
  const Tensor y({4}, {0, 0, 1, 0});
  CHECK(action_sigmoid_ce(tape.leaf(Tensor({4}, {-30, -30, 30, -30})), y).value().item() <= 1e-12);
  CHECK(action_sigmoid_ce(tape.leaf(Tensor({2})), Tensor({2}, {1, 0})).value().item() ==
        doctest::Approx(2 * std::log(2.0)));
  CHECK(action_sigmoid_ce(tape.leaf(Tensor({2})), Tensor({2}, {1, 0}), ActionLossForm::PositiveOnly)
            .value()
            .item() == doctest::Approx(std::log(2.0)));
  CHECK_THROWS_AS(action_sigmoid_ce(tape.leaf(Tensor({4})), Tensor({4}, {0, 1, 1, 0})), ContractViolation);
  CHECK_THROWS_AS(action_sigmoid_ce(tape.leaf(Tensor({4})), Tensor({4}, {0, 0.5, 0, 0})), ContractViolation);
  CHECK_THROWS_AS(action_sigmoid_ce(tape.leaf(Tensor({3})), y), DimensionError);

  Rng rng(43);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor z = Tensor::uniform({6}, -5, 5, rng);
    Tensor hot({6});
    hot[rng.below(6)] = 1.0;
    double two = 0, pos = 0;
    for (std::size_t i = 0; i < 6; ++i) {
      const double s = 1.0 / (1.0 + std::exp(-z[i]));
      two -= hot[i] * std::log(s) + (1 - hot[i]) * std::log(1 - s);
      pos -= hot[i] * std::log(s);
    }
    CHECK(action_sigmoid_ce(tape.leaf(z), hot).value().item() == doctest::Approx(two).epsilon(1e-12));
    CHECK(action_sigmoid_ce(tape.leaf(z), hot, ActionLossForm::PositiveOnly).value().item() ==
          doctest::Approx(pos).epsilon(1e-12));
  }
}

TEST_CASE("v2c_joint_loss") {
  Tape tape;
  CHECK(v2c_joint_loss(tape.leaf(Tensor::scalar(0)), tape.leaf(Tensor::scalar(0))).value().item() == 0.0);
  CHECK(v2c_joint_loss(tape.leaf(Tensor::scalar(1.5)), tape.leaf(Tensor::scalar(0.5))).value().item() == 2.0);

  // Gradient reaches both branches and matches finite differences.
  Rng rng(44);
  ParameterSet ps;
  Parameter& a = ps.add("translation.w", Tensor::uniform({3}, -1, 1, rng));
  Parameter& b = ps.add("action.w", Tensor::uniform({3}, -1, 1, rng));
  const Tensor hot({3}, {0, 1, 0});
  auto f = [&](Tape& t) {
    return v2c_joint_loss(sum(square(t.parameter(a))), action_sigmoid_ce(t.parameter(b), hot));
  };
  Tape t;
  Var l = f(t);
  t.backward(l);
  CHECK(max_abs_diff(a.grad, Tensor({3})) > 0);
  CHECK(max_abs_diff(b.grad, Tensor({3})) > 0);
  CHECK(gradcheck_params("joint", f, ps).max_rel_error < kGradcheckTolerance);
}

TEST_CASE("weight_decay") {
  ParameterSet ps;
  ps.add("w", Tensor({1}, {2.0}));
  ps.add("b", Tensor({1}, {5.0}), false);
  Tape tape;
  CHECK(weight_decay(tape, ps, 0.0).value().item() == 0.0);
  CHECK(weight_decay(tape, ps, 0.1).value().item() == doctest::Approx(0.4));

  Rng rng(45);
  ParameterSet many;
  double direct = 0;
  for (int i = 0; i < 5; ++i) {
    Parameter& p = many.add("p" + std::to_string(i), Tensor::uniform({3, 2}, -1, 1, rng), i % 2 == 0);
    if (p.decay)
      for (double v : p.value.data()) direct += v * v;
  }
  CHECK(weight_decay(tape, many, 0.3).value().item() == doctest::Approx(0.3 * direct).epsilon(1e-14));
  CHECK_THROWS_AS(weight_decay(tape, many, -1.0), ParameterError);
}

TEST_CASE("losses are nonnegative") {
  Rng rng(46);
  Tape tape;
  for (int trial = 0; trial < 50; ++trial) {
    CHECK(ce_class(tape.leaf(random_distribution(5, rng)), rng.below(5)).value().item() >= 0);
    const Tensor z = Tensor::uniform({5}, -10, 10, rng);
    Tensor hot({5});
    hot[rng.below(5)] = 1.0;
    CHECK(action_sigmoid_ce(tape.leaf(z), hot).value().item() >= 0);
    CHECK(smooth_l1(rng.uniform(-5, 5)) >= 0);
  }
}
