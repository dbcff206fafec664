// Copyright 2026 The affkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "affkit/losses.hpp"

#include <algorithm>
#include <cmath>

#include "affkit/error.hpp"

namespace affkit::loss {

namespace {

void require_distribution(const Tensor& p, const char* op) {
  double s = 0.0;
  for (double v : p.data()) {
    if (v < 0.0) throw ContractViolation(std::string(op) + ": negative probability");
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-6) throw ContractViolation(std::string(op) + ": probabilities sum to " + std::to_string(s));
}

// log(1 + e^x) without overflow.
double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

Var ce_class(Var probs, std::size_t u) {
  if (probs.value().rank() != 1) throw DimensionError("ce_class: expected a probability vector");
  if (u >= probs.size())
    throw ContractViolation("ce_class: class " + std::to_string(u) + " outside " + std::to_string(probs.size()) +
                            " categories");
  require_distribution(probs.value(), "ce_class");
  return reshape(affine(log(slice(probs, u, 1), kProbFloor), -1.0, 0.0), {});
}

double smooth_l1(double x) { return std::abs(x) < 1.0 ? 0.5 * x * x : std::abs(x) - 0.5; }

Var smooth_l1(Var t, const det::BoxOffset& v) {
  if (t.shape() != Shape{4}) throw DimensionError("smooth_l1: offset must be [4], got " + to_string(t.shape()));
  const double target[4] = {v.tx, v.ty, v.tw, v.th};
  double total = 0.0;
  Tensor slope({4});
  for (std::size_t i = 0; i < 4; ++i) {
    const double d = t.value()[i] - target[i];
    total += smooth_l1(d);
    slope[i] = std::abs(d) < 1.0 ? d : (d > 0 ? 1.0 : -1.0);
  }
  const std::size_t it = t.id();
  return t.tape().record(Tensor::scalar(total), [it, slope](Tape& tp, std::size_t self) {
    const double g = tp.grad(self)[0];
    Tensor& gt = tp.grad_mut(it);
    for (std::size_t i = 0; i < 4; ++i) gt[i] += g * slope[i];
  });
}

Var aff_mask_loss(Var probs, const LabelGrid& target) {
  if (probs.value().rank() != 3) throw DimensionError("aff_mask_loss: expected [C x H x W] probabilities");
  const std::size_t C = probs.shape()[0], H = probs.shape()[1], W = probs.shape()[2];
  if (target.height != H || target.width != W)
    throw DimensionError("aff_mask_loss: prediction " + to_string(probs.shape()) + " vs target " +
                         std::to_string(target.height) + "x" + std::to_string(target.width));
  const Tensor& m = probs.value();
  const std::size_t plane = H * W;
  double total = 0.0;
  for (std::size_t p = 0; p < plane; ++p) {
    const int label = target.labels[p];
    if (label < 0 || static_cast<std::size_t>(label) >= C)
      throw ContractViolation("aff_mask_loss: label " + std::to_string(label) + " outside " + std::to_string(C) +
                              " classes");
    double s = 0.0;
    for (std::size_t c = 0; c < C; ++c) s += m[c * plane + p];
    if (std::abs(s - 1.0) > 1e-6) throw ContractViolation("aff_mask_loss: pixel distribution does not sum to 1");
    total -= std::log(std::max(m[static_cast<std::size_t>(label) * plane + p], kProbFloor));
  }
  const double n = static_cast<double>(plane);
  const std::size_t ip = probs.id();
  return probs.tape().record(Tensor::scalar(total / n), [ip, plane, n, labels = target.labels](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    const Tensor& m = t.value(ip);
    Tensor& gm = t.grad_mut(ip);
    for (std::size_t p = 0; p < plane; ++p) {
      const std::size_t idx = static_cast<std::size_t>(labels[p]) * plane + p;
      if (m[idx] > kProbFloor) gm[idx] -= g / (n * m[idx]);
    }
  });
}

Var detection_joint_loss(Var p, Var t_u, Var m, const DetectionTarget& target) {
  Var total = ce_class(p, target.u);
  if (target.u == 0) {
    if (std::any_of(target.s.labels.begin(), target.s.labels.end(), [](int l) { return l != 0; }))
      throw ContractViolation("detection_joint_loss: background RoI with a non-empty affordance mask");
    return total;
  }
  return total + smooth_l1(t_u, target.v) + aff_mask_loss(m, target.s);
}

Var seq_nll(Var probs, std::span<const std::size_t> targets, std::span<const bool> real_word) {
  if (probs.value().rank() != 2) throw DimensionError("seq_nll: expected [T x V] distributions");
  const std::size_t T = probs.shape()[0], V = probs.shape()[1];
  if (targets.size() != T || real_word.size() != T)
    throw DimensionError("seq_nll: " + std::to_string(T) + " distributions vs " + std::to_string(targets.size()) +
                         " targets / " + std::to_string(real_word.size()) + " mask entries");
  const Tensor& pv = probs.value();
  double total = 0.0;
  std::vector<std::size_t> picked;
  for (std::size_t t = 0; t < T; ++t) {
    if (!real_word[t]) continue;
    if (targets[t] >= V) throw ContractViolation("seq_nll: target word outside vocabulary");
    const std::size_t idx = t * V + targets[t];
    total -= std::log(std::max(pv[idx], kProbFloor));
    picked.push_back(idx);
  }
  const std::size_t ip = probs.id();
  return probs.tape().record(Tensor::scalar(total), [ip, picked = std::move(picked)](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    const Tensor& pv = t.value(ip);
    Tensor& gp = t.grad_mut(ip);
    for (std::size_t idx : picked)
      if (pv[idx] > kProbFloor) gp[idx] -= g / pv[idx];
  });
}

Var action_sigmoid_ce(Var logits, const Tensor& one_hot, ActionLossForm form) {
  if (logits.value().rank() != 1 || one_hot.shape() != logits.shape())
    throw DimensionError("action_sigmoid_ce: logits " + to_string(logits.shape()) + " vs target " +
                         to_string(one_hot.shape()));
  std::size_t ones = 0;
  for (double y : one_hot.data()) {
    if (y == 1.0)
      ++ones;
    else if (y != 0.0)
      throw ContractViolation("action_sigmoid_ce: target is not one-hot");
  }
  if (ones != 1) throw ContractViolation("action_sigmoid_ce: target is not one-hot");

  const Tensor& x = logits.value();
  const std::size_t C = x.size();
  double total = 0.0;
  Tensor slope({C});
  for (std::size_t i = 0; i < C; ++i) {
    const double y = one_hot[i];
    const double s = sigmoid(x[i]);
    if (form == ActionLossForm::TwoTerm) {
      // -log s(x) = softplus(-x), -log(1 - s(x)) = softplus(x)
      total += y * softplus(-x[i]) + (1.0 - y) * softplus(x[i]);
      slope[i] = s - y;
    } else {
      total -= y * std::log(std::max(s, kProbFloor));
      slope[i] = (y != 0.0 && s > kProbFloor) ? -y * (1.0 - s) : 0.0;
    }
  }
  const std::size_t il = logits.id();
  return logits.tape().record(Tensor::scalar(total), [il, slope](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    Tensor& gl = t.grad_mut(il);
    for (std::size_t i = 0; i < slope.size(); ++i) gl[i] += g * slope[i];
  });
}

Var v2c_joint_loss(Var translation, Var action) {
  if (translation.size() != 1 || action.size() != 1) throw DimensionError("v2c_joint_loss: expected scalar losses");
  if (translation.value()[0] < 0.0 || action.value()[0] < 0.0)
    throw ContractViolation("v2c_joint_loss: losses must be non-negative");
  return translation + action;
}

Var weight_decay(Tape& tape, ParameterSet& params, double lambda) {
  if (lambda < 0.0) throw ParameterError("weight_decay: lambda must be non-negative");
  std::vector<Var> terms;
  for (auto& p : params)
    if (p->decay) terms.push_back(sum(square(tape.parameter(*p))));
  if (terms.empty()) return tape.leaf(Tensor::scalar(0.0));
  Var total = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) total = total + terms[i];
  return affine(total, lambda, 0.0);
}

}  // namespace affkit::loss
