// Copyright 2026 The affkit Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "affkit/error.hpp"
#include "affkit/gradcheck.hpp"
#include "affkit/toy.hpp"
#include "affkit/v2c.hpp"

using namespace affkit;
using namespace affkit::v2c;

namespace {

V2CConfig small_config(nn::CellKind kind, std::size_t vocab_size, std::size_t num_actions = 4) {
  V2CConfig c;
  c.cell = kind;
  c.feature_dim = 16;
  c.hidden = 16;
  c.vocab_size = vocab_size;
  c.num_actions = num_actions;
  c.frames = 30;
  c.tcn_filters = {16, 8, 8};
  c.fc_units = 16;
  return c;
}

void zero_params(V2CNet& net) {
  for (auto& p : net.params()) p->value = Tensor(p->value.shape());
}

const nn::CellKind kCells[] = {nn::CellKind::Lstm, nn::CellKind::Gru};

}  // namespace

TEST_CASE("vocabulary") {
  Vocabulary v;
  CHECK(v.size() == 2);
  CHECK(v.index("<pad>") == kPadId);
  CHECK(v.index("<eoc>") == kEocId);
  CHECK(v.add("cut") == 2);
  CHECK(v.add("cut") == 2);
  CHECK(v.contains("cut"));
  CHECK_THROWS_AS(v.index("pour"), ContractViolation);
  CHECK_THROWS_AS(Vocabulary({"<eoc>", "<pad>"}), ContractViolation);
  CHECK_THROWS_AS(Vocabulary({"<pad>", "<eoc>", "a", "a"}), ContractViolation);

  for (const char* w : {"righthand", "apple", "lefthand", "carry", "salt", "box"}) v.add(w);
  const CommandSequence c = encode_command("righthand cut apple", v);
  CHECK(c == CommandSequence{3, 2, 4});
  CHECK(decode_command(c, v) == "righthand cut apple");
  CHECK_THROWS_AS(encode_command("righthand <eoc>", v), ContractViolation);

  CHECK(extract_verb(c, v) == "cut");
  CHECK(extract_verb(encode_command("lefthand carry salt box", v), v) == "carry");
  v.add("stir");
  CHECK(extract_verb(encode_command("stir", v), v) == "stir");
  CHECK_THROWS_AS(extract_verb({}, v), ContractViolation);
}

TEST_CASE("one_hot") {
  CHECK(one_hot(3, 5) == Tensor({5}, {0, 0, 0, 1, 0}));
  CHECK(one_hot(0, 4) == Tensor({4}, {1, 0, 0, 0}));
  CHECK_THROWS_AS(one_hot(5, 5), ContractViolation);
  Rng rng(61);
  for (int i = 0; i < 20; ++i) CHECK(sum(one_hot(rng.below(9), 9)) == 1.0);
}

TEST_CASE("pad_frames") {
  Rng rng(62);
  const Tensor mean = Tensor::uniform({1, 4}, 0, 1, rng);
  const Tensor twenty = Tensor::uniform({20, 4}, -1, 1, rng);
  const Tensor p20 = pad_frames(twenty, 30, mean);
  CHECK(p20.shape() == Shape{30, 4});
  for (std::size_t t = 0; t < 30; ++t)
    for (std::size_t k = 0; k < 4; ++k) CHECK(p20(t, k) == (t < 20 ? twenty(t, k) : mean[k]));

  const Tensor thirty = Tensor::uniform({30, 4}, -1, 1, rng);
  CHECK(pad_frames(thirty, 30, mean) == thirty);

  const Tensor sixty = Tensor::uniform({60, 4}, -1, 1, rng);
  const Tensor p60 = pad_frames(sixty, 30, mean);
  for (std::size_t t = 0; t < 30; ++t)
    for (std::size_t k = 0; k < 4; ++k) CHECK(p60(t, k) == sixty(2 * t, k));
  CHECK(sample_frame_indices(60, 30)[29] == 58);

  std::vector<Tensor> list;
  for (std::size_t t = 0; t < 20; ++t) list.emplace_back(Shape{4}, std::vector<double>(twenty.data().begin() + t * 4, twenty.data().begin() + t * 4 + 4));
  CHECK(pad_frames(list, 30, mean) == p20);
  CHECK_THROWS_AS(pad_frames(std::span<const Tensor>{}, 30, mean), ContractViolation);
  CHECK_THROWS_AS(pad_frames(twenty, 30, Tensor({1, 5})), DimensionError);
}

TEST_CASE("pad_command") {
  const PaddedCommand p = pad_command({5, 7, 9}, 6);
  CHECK(p.targets == std::vector<std::size_t>{5, 7, 9, kEocId, kPadId, kPadId});
  CHECK(p.real == std::vector<bool>{true, true, true, true, false, false});
  CHECK_THROWS_AS(pad_command(CommandSequence(6, 3), 6), ContractViolation);
  CHECK(project_first_last({4, 5, 6, 7}) == CommandSequence{4, 7});
  CHECK(project_first_last({4}) == CommandSequence{4});
  const double v[] = {0.1, 0.9, 0.9, 0.3};
  CHECK(argmax(v) == 1);
}

TEST_CASE("translation branch") {
  Rng rng(63);
  for (nn::CellKind kind : kCells) {
    CAPTURE(nn::to_string(kind));
    V2CNet net(small_config(kind, 10), 5);
    const Tensor x = Tensor::uniform({30, 16}, -1, 1, rng);

    SUBCASE("zero weights give uniform distributions") {
      zero_params(net);
      Tape tape;
      const std::vector<std::size_t> prev(29, 2);
      const Tensor d = net.word_distributions(tape, x, prev).value();
      CHECK(d.shape() == Shape{30, 10});
      for (double v : d.data()) CHECK(std::abs(v - 0.1) <= 1e-15);
    }
    SUBCASE("decoding") {
      const CommandSequence c = net.greedy_decode(x);
      CHECK(c.size() <= 30);
      CHECK(net.greedy_decode(x) == c);
      for (std::size_t w : c) CHECK(w >= 2);

      // PAD rigged to dominate is still never emitted.
      Parameter* b = net.params().find("word_out.bias");
      REQUIRE(b != nullptr);
      b->value[kPadId] = 100.0;
      for (std::size_t w : net.greedy_decode(x)) CHECK(w >= 2);

      b->value[kEocId] = 200.0;
      CHECK(net.greedy_decode(x).empty());
    }
    SUBCASE("padded positions contribute nothing") {
      const CommandSequence cmd{3, 4, 5};
      const PaddedCommand p = pad_command(cmd, 30);
      Tape tape;
      const Tensor d = net.word_distributions(tape, x, std::span(p.targets.data(), 29)).value();
      Tensor altered = d;
      for (std::size_t t = 4; t < 30; ++t)
        for (std::size_t k = 0; k < 10; ++k) altered(t, k) = k == 0 ? 1e-30 : 0.5;
      bool mask[30];
      std::copy(p.real.begin(), p.real.end(), mask);
      const double a = loss::seq_nll(tape.leaf(d), p.targets, std::span(mask, 30)).value().item();
      const double b = loss::seq_nll(tape.leaf(altered), p.targets, std::span(mask, 30)).value().item();
      CHECK(a == b);
      CHECK(net.translation_loss(tape, x, cmd).value().item() == doctest::Approx(a).epsilon(1e-14));
    }
    CHECK_THROWS_AS(net.greedy_decode(Tensor({29, 16})), DimensionError);
  }
}

TEST_CASE("action branch") {
  Rng rng(64);
  CHECK(tcn_output_length(30) == 7);
  CHECK(nn::maxpool_time(Tape().leaf(Tensor({1, 30}))).shape() == Shape{1, 15});
  for (nn::CellKind kind : kCells) {
    V2CNet net(small_config(kind, 10, 3), 6);
    CHECK(net.params().find("tcn.fc0.weight")->value.shape() == Shape{16, 8 * 7});
    const Tensor x = Tensor::uniform({30, 16}, -1, 1, rng);

    Tensor reversed({30, 16});
    for (std::size_t t = 0; t < 30; ++t)
      for (std::size_t k = 0; k < 16; ++k) reversed(t, k) = x(29 - t, k);
    CHECK(max_abs_diff(net.action_scores(x), net.action_scores(reversed)) > 1e-9);

    const Tensor s = net.action_scores(x);
    CHECK(net.predict_action(x) == argmax(s.data()));
    CHECK(net.classify_action(x) == one_hot(argmax(s.data()), 3));

    zero_params(net);
    CHECK(net.action_scores(x) == Tensor({3}));
    CHECK(net.predict_action(x) == 0);
    net.params().find("tcn.fc1.bias")->value = Tensor({3}, {0.1, 0.9, 0.3});
    CHECK(net.classify_action(x) == Tensor({3}, {0, 1, 0}));
    net.params().find("tcn.fc1.bias")->value = Tensor({3}, {0.2, 0.7, 0.7});
    CHECK(net.predict_action(x) == 1);
    CHECK_THROWS_AS(net.action_scores(Tensor({30, 15})), DimensionError);
  }
}

TEST_CASE("joint gradient is the sum of branch gradients") {
  Rng rng(65);
  for (nn::CellKind kind : kCells) {
    V2CConfig cfg = small_config(kind, 8, 3);
    cfg.frames = 8;
    V2CNet net(cfg, 7);
    for (auto& p : net.params())
      for (double& v : p->value.data()) v = rng.uniform(-0.5, 0.5);
    const Example ex{"e", Tensor::uniform({8, 16}, -1, 1, rng), {2, 3, 4}, 1};

    auto grads = [&](int which) {
      net.params().zero_grad();
      Tape tape;
      const V2CLosses l = net.losses(tape, ex);
      tape.backward(which == 0 ? l.joint : which == 1 ? l.translation : l.action);
      std::vector<Tensor> g;
      for (auto& p : net.params()) g.push_back(p->grad);
      return g;
    };
    const auto joint = grads(0), trans = grads(1), act = grads(2);
    for (std::size_t i = 0; i < joint.size(); ++i) {
      Tensor s = trans[i];
      for (std::size_t k = 0; k < s.size(); ++k) s[k] += act[i][k];
      CHECK(max_abs_diff(joint[i], s) <= 1e-12);
      // The branches touch disjoint parameters.
      CHECK((max_abs_diff(trans[i], Tensor(s.shape())) == 0.0 || max_abs_diff(act[i], Tensor(s.shape())) == 0.0));
    }
    const auto r = gradcheck_params(
        "v2c", [&](Tape& t) { return net.losses(t, ex).joint; }, net.params(), 1e-5, 6);
    CHECK(r.max_rel_error < kGradcheckTolerance);
  }
}

TEST_CASE("training steps") {
  const toy::V2CToySet set = toy::make_v2c_toyset(3, 8);
  const std::size_t V = set.vocab.size();
  for (nn::CellKind kind : kCells) {
    CAPTURE(nn::to_string(kind));
    SUBCASE("learning rate zero leaves parameters unchanged") {
      V2CNet net(small_config(kind, V), 1);
      std::vector<Tensor> before;
      for (auto& p : net.params()) before.push_back(p->value);
      Adam adam(net.params(), {0.0});
      const StepLosses l = v2c_train_step(net, adam, std::span(set.examples.data(), 2));
      CHECK(l.joint == doctest::Approx(l.translation + l.action));
      for (std::size_t i = 0; i < before.size(); ++i) CHECK(net.params()[i].value == before[i]);
    }
    SUBCASE("single example loss decreases") {
      V2CNet net(small_config(kind, V), 2);
      Adam adam(net.params(), {1e-3});
      const std::span<const Example> one(set.examples.data(), 1);
      const double first = v2c_train_step(net, adam, one).joint;
      double last = first;
      for (int s = 1; s < 50; ++s) last = v2c_train_step(net, adam, one).joint;
      CHECK(last < first);
    }
    SUBCASE("overfit single example") {
      V2CNet net(small_config(kind, V), 3);
      Adam adam(net.params(), {1e-2});
      const std::span<const Example> one(set.examples.data(), 1);
      for (int s = 0; s < 600; ++s) v2c_train_step(net, adam, one);
      Tape tape;
      CHECK(net.translation_loss(tape, one[0].features, one[0].command).value().item() < 0.01);
      CHECK(net.greedy_decode(one[0].features) == one[0].command);
      CHECK(net.predict_action(one[0].features) == one[0].action);
    }
    SUBCASE("divergence is reported with its step") {
      V2CNet net(small_config(kind, V), 4);
      Adam adam(net.params(), {1e-3});
      v2c_train_step(net, adam, std::span(set.examples.data(), 1));
      net.params().find("tcn.fc1.bias")->value[0] = std::numeric_limits<double>::quiet_NaN();
      try {
        v2c_train_step(net, adam, std::span(set.examples.data(), 1));
        FAIL("expected TrainingError");
      } catch (const TrainingError& e) {
        CHECK(e.step() == 2);
      }
    }
  }
  V2CNet net(small_config(nn::CellKind::Lstm, V), 1);
  Adam adam(net.params());
  CHECK_THROWS_AS(v2c_train_step(net, adam, std::span<const Example>{}), ContractViolation);
}

TEST_CASE("joint training on a toy dataset") {
  const toy::V2CToySet set = toy::make_v2c_toyset(9, 50);
  V2CConfig cfg = small_config(nn::CellKind::Gru, set.vocab.size());
  V2CNet net(cfg, 11);
  Adam adam(net.params(), {1e-3});
  TrainConfig tc;
  tc.epochs = 40;
  tc.batch_size = 1;
  tc.seed = 5;
  const auto stats = train(net, adam, set.examples, tc);
  REQUIRE(stats.size() == 40);
  CHECK(stats.back().mean.joint < stats.front().mean.joint);
  CHECK(evaluate_accuracy(net, set.examples).action == 1.0);

  V2CNet again(cfg, 11);
  Adam adam2(again.params(), {1e-3});
  tc.epochs = 2;
  const auto repeat = train(again, adam2, set.examples, tc);
  CHECK(repeat[0].mean.joint == stats[0].mean.joint);
  CHECK(repeat[1].mean.joint == stats[1].mean.joint);
}
