// Copyright 2026 The affkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "affkit/autodiff.hpp"
#include "affkit/geometry.hpp"
#include "affkit/label_grid.hpp"
#include "affkit/loss_constants.hpp"

namespace affkit::loss {

/// Probabilities are clamped to this floor before any log.
inline constexpr double kProbFloor = kLogFloor;

/// -log max(p_u, eps) for a probability vector p.
Var ce_class(Var probs, std::size_t u);

/// 0.5 x^2 for |x| < 1, |x| - 0.5 otherwise.
double smooth_l1(double x);
/// Sum of smooth_l1 over the four offset coordinates of t - v; t is a [4] Var.
Var smooth_l1(Var t, const det::BoxOffset& v);

/// Mean over pixels of -log m[s_i] with m a per-pixel distribution laid out
/// [C+1 x H x W] (channel softmax output) and s the target labels.
Var aff_mask_loss(Var probs, const LabelGrid& target);

struct DetectionTarget {
  std::size_t u = 0;  ///< object class, 0 = background
  det::BoxOffset v;
  LabelGrid s;        ///< target affordance mask, background only when u == 0
};

/// L_cls(p, u) + [u >= 1] (L_loc(t_u, v) + L_aff(m, s)). For background RoIs
/// `t_u` and `m` are not touched and may be invalid handles.
Var detection_joint_loss(Var p, Var t_u, Var m, const DetectionTarget& target);

/// -sum over non-pad positions of log P(target word). probs is [T x V].
Var seq_nll(Var probs, std::span<const std::size_t> targets, std::span<const bool> real_word);

enum class ActionLossForm {
  TwoTerm,      ///< -[y log s + (1 - y) log(1 - s)] per class
  PositiveOnly  ///< -y log s per class
};

/// Sigmoid cross-entropy of C logits against a one-hot target.
Var action_sigmoid_ce(Var logits, const Tensor& one_hot, ActionLossForm form = ActionLossForm::TwoTerm);

/// Unweighted sum of the translation and action losses.
Var v2c_joint_loss(Var translation, Var action);

/// lambda * sum of squared entries of every parameter with decay enabled.
Var weight_decay(Tape& tape, ParameterSet& params, double lambda);

}  // namespace affkit::loss
