// Copyright 2026 The affkit Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>

#include "affkit/geometry.hpp"
#include "affkit/gradcheck.hpp"
#include "affkit/label_grid.hpp"
#include "affkit/layers.hpp"
#include "affkit/losses.hpp"
#include "affkit/recurrent.hpp"
#include "affkit/rng.hpp"
#include "affkit/toy.hpp"
#include "affkit/v2c.hpp"

namespace affkit {

namespace {

// Uniform values kept at least `gap` away from zero, for kinked ops.
Tensor away_from_zero(Shape shape, double gap, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) {
    const double m = rng.uniform(gap, 1.0);
    v = rng.bernoulli(0.5) ? m : -m;
  }
  return t;
}

// Shuffled, well-separated values so max selections are stable under FD.
Tensor separated(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  std::vector<std::size_t> order(t.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  shuffle(order, rng);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = -1.0 + 2.0 * (order[i] + rng.uniform(0.1, 0.9)) / t.size();
  return t;
}

// Zero-initialized biases can park a ReLU exactly on its kink; randomize
// every parameter before differencing.
void randomize(ParameterSet& params, Rng& rng) {
  for (auto& p : params) p->value = Tensor::uniform(p->value.shape(), -0.5, 0.5, rng);
}

// Scalar probe: sum(out * W) for fixed random W.
Var probe(Var out, std::uint64_t salt) {
  Rng rng(0x9E0BEULL + salt);
  return sum(out * out.tape().leaf(Tensor::uniform(out.shape(), -1.0, 1.0, rng)));
}

}  // namespace

std::vector<GradcheckResult> run_gradcheck_suite(std::uint64_t seed) {
  std::vector<GradcheckResult> out;
  Rng rng(seed);
  const auto U = [&](Shape s, double lo = -1.0, double hi = 1.0) { return Tensor::uniform(std::move(s), lo, hi, rng); };

  // --- elementwise and structural ops ---
  out.push_back(gradcheck_inputs("matmul", [](Tape&, const std::vector<Var>& v) { return probe(matmul(v[0], v[1]), 1); },
                                 {U({3, 4}), U({4, 2})}));
  out.push_back(gradcheck_inputs(
      "linear2", [](Tape&, const std::vector<Var>& v) { return probe(linear2(v[0], v[1], v[2], v[3], v[4]), 2); },
      {U({3, 4}), U({4}), U({3, 2}), U({2}), U({3})}));
  out.push_back(gradcheck_inputs(
      "add_sub_mul",
      [](Tape&, const std::vector<Var>& v) { return probe((v[0] + v[1]) * (v[0] - v[1]) * v[1], 3); },
      {U({5}), U({5})}));
  out.push_back(gradcheck_inputs(
      "add_bias_scale_trailing",
      [](Tape&, const std::vector<Var>& v) { return probe(add_bias(scale_trailing(v[0], v[1]), v[2]), 4); },
      {U({3, 4}), U({4}), U({4})}));
  out.push_back(gradcheck_inputs(
      "sigmoid_tanh_exp_square",
      [](Tape&, const std::vector<Var>& v) {
        return probe(sigmoid(v[0]) + tanh(v[0]) + exp(v[0]) + square(v[0]) + affine(v[0], 2.0, 1.0), 5);
      },
      {U({6})}));
  out.push_back(gradcheck_inputs("relu", [](Tape&, const std::vector<Var>& v) { return probe(relu(v[0]), 6); },
                                 {away_from_zero({8}, 0.05, rng)}));
  out.push_back(gradcheck_inputs("log", [](Tape&, const std::vector<Var>& v) { return probe(log(v[0]), 7); },
                                 {U({6}, 0.2, 2.0)}));
  out.push_back(gradcheck_inputs(
      "sum_mean_reshape_transpose",
      [](Tape&, const std::vector<Var>& v) {
        return sum(v[0]) * mean(square(transpose(reshape(v[0], {3, 2})))) ;
      },
      {U({6})}));
  out.push_back(gradcheck_inputs(
      "concat_slice",
      [](Tape&, const std::vector<Var>& v) { return probe(slice(concat({v[0], v[1]}), 2, 5), 8); },
      {U({4}), U({3})}));
  out.push_back(gradcheck_inputs("softmax", [](Tape&, const std::vector<Var>& v) { return probe(softmax(v[0]), 9); },
                                 {U({3, 5})}));

  // --- layers ---
  {
    nn::Conv2DParams p;
    p.filters = 3;
    p.kernel_h = 3;
    p.kernel_w = 2;
    p.stride = 2;
    p.pad_h = 1;
    p.pad_w = 1;
    out.push_back(gradcheck_inputs(
        "conv2d", [p](Tape&, const std::vector<Var>& v) { return probe(nn::conv2d(v[0], v[1], v[2], p), 10); },
        {U({2, 5, 6}), U({3, 2, 3, 2}), U({3})}));
    p.stride = 1;
    p.dilation = 2;
    p.pad_h = 2;
    out.push_back(gradcheck_inputs(
        "conv2d_atrous", [p](Tape&, const std::vector<Var>& v) { return probe(nn::conv2d(v[0], v[1], v[2], p), 11); },
        {U({2, 6, 6}), U({3, 2, 3, 2}), U({3})}));
  }
  out.push_back(gradcheck_inputs(
      "deconv2d", [](Tape&, const std::vector<Var>& v) { return probe(nn::deconv2d(v[0], v[1], v[2], 2, 1), 12); },
      {U({2, 3, 3}), U({2, 3, 4, 4}), U({3})}));
  out.push_back(gradcheck_inputs(
      "maxpool_unpool",
      [](Tape&, const std::vector<Var>& v) {
        const nn::PoolOutput p = nn::maxpool2d(v[0]);
        return probe(nn::maxunpool2d(p.values * p.values, p.indices), 13);
      },
      {separated({2, 5, 4}, rng)}));
  out.push_back(gradcheck_inputs("maxpool_time",
                                 [](Tape&, const std::vector<Var>& v) { return probe(nn::maxpool_time(v[0]), 14); },
                                 {separated({3, 1, 7}, rng)}));
  out.push_back(gradcheck_inputs(
      "dropout",
      [](Tape&, const std::vector<Var>& v) {
        Rng mask_rng(42);
        return probe(nn::dropout(v[0], 0.3, nn::Mode::Train, mask_rng), 15);
      },
      {U({10})}));
  out.push_back(gradcheck_inputs(
      "batchnorm_train",
      [](Tape&, const std::vector<Var>& v) { return probe(nn::batchnorm_train(v[0], v[1], v[2]).y, 16); },
      {U({4, 3}), U({3}, 0.5, 1.5), U({3})}));
  {
    const Tensor mean = U({3}), var = U({3}, 0.5, 2.0);
    out.push_back(gradcheck_inputs(
        "batchnorm_eval",
        [mean, var](Tape&, const std::vector<Var>& v) {
          return probe(nn::batchnorm_eval(v[0], v[1], v[2], mean, var), 17);
        },
        {U({4, 3}), U({3}, 0.5, 1.5), U({3})}));
  }
  out.push_back(gradcheck_inputs(
      "softmax_channels", [](Tape&, const std::vector<Var>& v) { return probe(nn::softmax_channels(v[0]), 18); },
      {U({3, 2, 3})}));

  // --- recurrent cells ---
  for (auto kind : {nn::CellKind::Lstm, nn::CellKind::Gru}) {
    ParameterSet params;
    Rng init = rng.fork(static_cast<std::uint64_t>(kind) + 100);
    auto cell = nn::make_cell(kind, params, "cell", 3, 4, init);
    randomize(params, init);
    const Tensor x0 = U({3}), x1 = U({3}), h0 = U({4}, -0.5, 0.5);
    const nn::RecurrentCell* c = cell.get();
    out.push_back(gradcheck_params(
        nn::to_string(kind) + "_step_params",
        [&](Tape& tape) {
          const auto states = nn::run_sequence(*c, tape, {tape.leaf(x0), tape.leaf(x1)},
                                               c->initial_state(tape, tape.leaf(h0)));
          return probe(states.back().h, 19);
        },
        params));
    out.push_back(gradcheck_inputs(
        nn::to_string(kind) + "_step_inputs",
        [c](Tape& tape, const std::vector<Var>& v) {
          nn::CellState s{v[1], v[2]};
          if (c->kind() == nn::CellKind::Gru) s.c = Var();
          const nn::CellState next = c->step(tape, v[0], s);
          Var r = probe(next.h, 20);
          if (c->kind() == nn::CellKind::Lstm) r = r + probe(next.c, 21);
          return r;
        },
        {U({3}), U({4}), U({4})}));
  }

  // --- detection geometry ---
  {
    det::RoiAlignConfig rc;
    rc.out_h = 3;
    rc.out_w = 2;
    rc.spatial_scale = 0.5;
    const det::BoundingBox roi{1.3, 2.1, 9.7, 11.2};
    out.push_back(gradcheck_inputs(
        "roi_align_features",
        [rc, roi](Tape&, const std::vector<Var>& v) { return probe(det::roi_align(v[0], roi, rc), 22); },
        {separated({2, 7, 6}, rng)}));
  }

  // --- losses ---
  out.push_back(gradcheck_inputs(
      "ce_class", [](Tape&, const std::vector<Var>& v) { return loss::ce_class(softmax(v[0]), 2); }, {U({4})}));
  {
    det::BoxOffset target{0.1, -0.2, 0.3, -0.05};
    Tensor t({4});
    // Keep |t - v| away from the Smooth-L1 knee at 1.
    const double d[4] = {0.4, -2.0, 1.6, -0.3};
    for (int i = 0; i < 4; ++i) t[i] = (&target.tx)[i] + d[i];
    out.push_back(gradcheck_inputs(
        "smooth_l1", [target](Tape&, const std::vector<Var>& v) { return loss::smooth_l1(v[0], target); }, {t}));
  }
  {
    LabelGrid s(3, 4);
    for (std::size_t i = 0; i < s.size(); ++i) s.labels[i] = static_cast<int>(rng.below(3));
    out.push_back(gradcheck_inputs(
        "aff_mask_loss",
        [s](Tape&, const std::vector<Var>& v) { return loss::aff_mask_loss(nn::softmax_channels(v[0]), s); },
        {U({3, 3, 4})}));
    loss::DetectionTarget target;
    target.u = 2;
    target.v = {0.1, 0.2, -0.1, 0.05};
    target.s = s;
    out.push_back(gradcheck_inputs(
        "detection_joint_loss",
        [target](Tape&, const std::vector<Var>& v) {
          return loss::detection_joint_loss(softmax(v[0]), v[1], nn::softmax_channels(v[2]), target);
        },
        {U({4}), U({4}, -0.5, 0.5), U({3, 3, 4})}));
  }
  {
    const std::vector<std::size_t> targets{3, 1, 0, 0};
    const bool real[4] = {true, true, false, false};
    out.push_back(gradcheck_inputs(
        "seq_nll",
        [targets, real](Tape&, const std::vector<Var>& v) {
          return loss::seq_nll(softmax(v[0]), targets, std::span<const bool>(real, 4));
        },
        {U({4, 5})}));
  }
  for (auto form : {loss::ActionLossForm::TwoTerm, loss::ActionLossForm::PositiveOnly}) {
    const Tensor y = v2c::one_hot(1, 4);
    out.push_back(gradcheck_inputs(
        form == loss::ActionLossForm::TwoTerm ? "action_sigmoid_ce" : "action_sigmoid_ce_positive",
        [y, form](Tape&, const std::vector<Var>& v) { return loss::action_sigmoid_ce(v[0], y, form); },
        {U({4}, -3.0, 3.0)}));
  }
  out.push_back(gradcheck_inputs(
      "v2c_joint_loss",
      [](Tape&, const std::vector<Var>& v) { return loss::v2c_joint_loss(sum(square(v[0])), sum(exp(v[1]))); },
      {U({3}), U({2})}));
  {
    ParameterSet params;
    params.add("w", U({3, 2}), true);
    params.add("b", U({2}), false);
    out.push_back(gradcheck_params(
        "weight_decay",
        [&](Tape& tape) { return loss::weight_decay(tape, params, 0.01) + probe(tape.parameter(params[1]), 23); },
        params));
  }

  // --- composite networks ---
  for (auto kind : {nn::CellKind::Lstm, nn::CellKind::Gru}) {
    v2c::V2CConfig cfg;
    cfg.cell = kind;
    cfg.feature_dim = 3;
    cfg.hidden = 4;
    cfg.vocab_size = 5;
    cfg.num_actions = 3;
    cfg.frames = 6;
    cfg.tcn_filters = {4, 3, 2};
    cfg.fc_units = 5;
    v2c::V2CNet net(cfg, rng.next_u64());
    randomize(net.params(), rng);
    v2c::Example ex;
    ex.features = U({6, 3});
    ex.command = {2, 4};
    ex.action = 1;
    out.push_back(gradcheck_params(
        "v2c_joint_" + nn::to_string(kind), [&](Tape& tape) { return net.losses(tape, ex).joint; }, net.params(),
        1e-5, 12));
  }
  {
    v2c::V2CConfig cfg;
    cfg.feature_dim = 3;
    cfg.hidden = 2;
    cfg.vocab_size = 3;
    cfg.num_actions = 3;
    cfg.frames = 8;
    cfg.tcn_filters = {4, 3, 2};
    cfg.fc_units = 5;
    v2c::V2CNet net(cfg, rng.next_u64());
    randomize(net.params(), rng);
    const Tensor features = U({8, 3});
    out.push_back(gradcheck_params(
        "tcn_stack", [&](Tape& tape) { return probe(net.action_scores(tape, features), 24); }, net.params(), 1e-5,
        16));
  }
  {
    ParameterSet params;
    toy::ToyEncoderConfig ec;
    ec.channels = {3, 2};
    Rng init = rng.fork(7);
    toy::ToyEncoder enc(params, "enc", ec, init);
    randomize(params, init);
    const Tensor image = U({3, 8, 8}, -0.5, 0.5);
    out.push_back(gradcheck_params(
        "toy_encoder", [&](Tape& tape) { return probe(enc.forward(tape, tape.leaf(image)), 25); }, params, 1e-5,
        10));
  }
  return out;
}

}  // namespace affkit
