// Copyright 2026 The affkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "affkit/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace affkit {

namespace {

std::vector<std::size_t> coordinate_subset(std::size_t n, std::size_t max_coords) {
  std::vector<std::size_t> idx;
  if (max_coords == 0 || n <= max_coords) {
    for (std::size_t i = 0; i < n; ++i) idx.push_back(i);
    return idx;
  }
  const double stride = static_cast<double>(n) / static_cast<double>(max_coords);
  for (std::size_t i = 0; i < max_coords; ++i) idx.push_back(static_cast<std::size_t>(i * stride));
  return idx;
}

double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
}

}  // namespace

GradcheckResult gradcheck_inputs(const std::string& name, const InputFn& f, std::vector<Tensor> inputs, double h,
                                 std::size_t max_coords) {
  auto evaluate = [&](bool want_grads, std::vector<Tensor>* grads) {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& t : inputs) vars.push_back(tape.leaf(t));
    Var out = f(tape, vars);
    const double value = out.value().item();
    if (want_grads) {
      tape.backward(out);
      for (const Var& v : vars) grads->push_back(v.grad());
    }
    return value;
  };

  std::vector<Tensor> analytic;
  evaluate(true, &analytic);

  GradcheckResult result{name, 0.0, 0};
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i : coordinate_subset(inputs[k].size(), max_coords)) {
      const double saved = inputs[k][i];
      inputs[k][i] = saved + h;
      const double fp = evaluate(false, nullptr);
      inputs[k][i] = saved - h;
      const double fm = evaluate(false, nullptr);
      inputs[k][i] = saved;
      const double numeric = (fp - fm) / (2.0 * h);
      result.max_rel_error = std::max(result.max_rel_error, rel_error(analytic[k][i], numeric));
      ++result.coordinates;
    }
  }
  return result;
}

GradcheckResult gradcheck_params(const std::string& name, const ParamFn& f, ParameterSet& params, double h,
                                 std::size_t max_coords) {
  params.zero_grad();
  {
    Tape tape;
    Var out = f(tape);
    tape.backward(out);
  }
  std::vector<Tensor> analytic;
  for (const auto& p : params) analytic.push_back(p->grad);

  auto evaluate = [&] {
    Tape tape;
    return f(tape).value().item();
  };

  GradcheckResult result{name, 0.0, 0};
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& value = params[k].value;
    for (std::size_t i : coordinate_subset(value.size(), max_coords)) {
      const double saved = value[i];
      value[i] = saved + h;
      const double fp = evaluate();
      value[i] = saved - h;
      const double fm = evaluate();
      value[i] = saved;
      const double numeric = (fp - fm) / (2.0 * h);
      result.max_rel_error = std::max(result.max_rel_error, rel_error(analytic[k][i], numeric));
      ++result.coordinates;
    }
  }
  params.zero_grad();
  return result;
}

}  // namespace affkit
