// Copyright 2026 The affkit Authors
// SPDX-License-Identifier: Apache-2.0

// Central finite-difference gradient checking.
//
// Error metric for one coordinate: |analytic - numeric| / max(1, |analytic|).

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "affkit/autodiff.hpp"

namespace affkit {

struct GradcheckResult {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
};

/// Scalar function of leaf inputs, rebuilt on a fresh tape for every evaluation.
using InputFn = std::function<Var(Tape&, const std::vector<Var>&)>;
/// Scalar function of a model's parameters.
using ParamFn = std::function<Var(Tape&)>;

/// Checks d f / d inputs. `max_coords` caps coordinates per input (0 = all);
/// the subset is evenly strided so the check stays deterministic.
GradcheckResult gradcheck_inputs(const std::string& name, const InputFn& f, std::vector<Tensor> inputs,
                                 double h = 1e-5, std::size_t max_coords = 0);

/// Checks d f / d params for every parameter in the set.
GradcheckResult gradcheck_params(const std::string& name, const ParamFn& f, ParameterSet& params,
                                 double h = 1e-5, std::size_t max_coords = 0);

/// Runs the library-wide suite: every differentiable operation on seeded
/// random float64 tensors.
std::vector<GradcheckResult> run_gradcheck_suite(std::uint64_t seed);

inline constexpr double kGradcheckTolerance = 1e-4;

}  // namespace affkit
