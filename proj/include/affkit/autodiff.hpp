// Copyright 2026 The affkit Authors
// SPDX-License-Identifier: Apache-2.0

// Reverse-mode differentiation over Tensor values.
//
// A Tape records every operation executed during one forward pass. Var is a
// cheap handle (tape pointer + node id). Calling Tape::backward on a scalar
// visits the recorded operations in exact reverse order and accumulates
// adjoints; leaves bound to a Parameter have their gradient added to
// Parameter::grad. One tape per training step; a tape can be backpropagated
// only once.

#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "affkit/tensor.hpp"

namespace affkit {

/// A trainable tensor and its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  /// Included in the weight-decay penalty (biases are not).
  bool decay = true;

  void zero_grad() { grad = Tensor(value.shape()); }
};

/// Ordered collection of named parameters with stable addresses.
class ParameterSet {
 public:
  Parameter& add(std::string name, Tensor value, bool decay = true);

  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;

  void zero_grad();
  std::size_t size() const { return params_.size(); }
  std::size_t element_count() const;

  Parameter& operator[](std::size_t i) { return *params_[i]; }
  const Parameter& operator[](std::size_t i) const { return *params_[i]; }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  /// Propagates the adjoint of node `self` into its inputs.
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf node. Receives a gradient like any other node.
  Var leaf(Tensor value);
  /// Leaf bound to `p`; the same parameter always maps to the same node.
  Var parameter(Parameter& p);
  /// Records an operation's output.
  Var record(Tensor value, BackwardFn backward);

  void backward(Var loss);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  /// Adjoint of a node. Zero for nodes that do not influence the loss.
  const Tensor& grad(std::size_t id) const;
  /// Mutable adjoint, for use inside BackwardFn only.
  Tensor& grad_mut(std::size_t id) { return nodes_[id].grad; }

  std::size_t size() const { return nodes_.size(); }
  bool finished() const { return finished_; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    Parameter* param = nullptr;
  };

  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
  bool finished_ = false;
};

// --- Differentiable operations -------------------------------------------
// Binary ops require identical shapes; the only broadcast is add_bias.

Var matmul(Var a, Var b);                 ///< [m x k] . [k x n]
Var matvec(Var w, Var x);                 ///< [m x k] . [k]
Var linear(Var w, Var x, Var b);          ///< w.x + b for vector x
Var linear2(Var wx, Var x, Var wh, Var h, Var b);  ///< wx.x + wh.h + b, one node

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var add_bias(Var x, Var bias);            ///< bias broadcast over the trailing axis
Var scale_trailing(Var x, Var scale);     ///< x * scale, scale broadcast over the trailing axis
Var affine(Var a, double scale, double shift);     ///< scale * a + shift

Var sigmoid(Var a);
Var tanh(Var a);
Var relu(Var a);
Var exp(Var a);
/// Natural log of max(a, eps); gradient is zero where the clamp is active.
Var log(Var a, double eps = 1e-12);
Var square(Var a);

Var sum(Var a);
Var mean(Var a);
Var reshape(Var a, Shape shape);
Var transpose(Var a);                     ///< rank-2 only
Var concat(const std::vector<Var>& parts);  ///< flattens and joins
Var slice(Var a, std::size_t offset, std::size_t length);  ///< flat range
Var softmax(Var a);                       ///< over the last axis, max-stabilized

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double s, Var a) { return affine(a, s, 0.0); }

// Plain-tensor helpers shared by ops and tests.
Tensor softmax_lastaxis(const Tensor& logits);
double sigmoid(double x);

}  // namespace affkit
