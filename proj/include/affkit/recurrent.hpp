// Copyright 2026 The affkit Authors
// SPDX-License-Identifier: Apache-2.0

// LSTM and GRU cells.
//
//   LSTM: i,f,o = sigmoid(W_x* x + W_h* h_prev + b_*)
//         g     = tanh(W_xg x + W_hg h_prev + b_g)
//         c     = f * c_prev + i * g
//         h     = o * tanh(c)
//
//   GRU:  r,z   = sigmoid(W_x* x + W_h* h_prev + b_*)
//         h~    = tanh(W_xh x + W_hh (r * h_prev) + b_h)
//         h     = z * h_prev + (1 - z) * h~

#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "affkit/autodiff.hpp"
#include "affkit/rng.hpp"

namespace affkit::nn {

enum class CellKind { Lstm, Gru };

CellKind parse_cell_kind(const std::string& name);
std::string to_string(CellKind kind);

/// Recurrent state. `c` is only meaningful for LSTM cells.
struct CellState {
  Var h;
  Var c;
};

struct LSTMWeights {
  Parameter *w_xi, *w_hi, *b_i;
  Parameter *w_xf, *w_hf, *b_f;
  Parameter *w_xo, *w_ho, *b_o;
  Parameter *w_xg, *w_hg, *b_g;
};

struct GRUWeights {
  Parameter *w_xr, *w_hr, *b_r;
  Parameter *w_xz, *w_hz, *b_z;
  Parameter *w_xh, *w_hh, *b_h;
};

CellState lstm_step(Tape& tape, Var x, const CellState& prev, const LSTMWeights& w);
Var gru_step(Tape& tape, Var x, Var prev_h, const GRUWeights& w);

/// Default weight init range, uniform [-0.08, 0.08].
inline constexpr double kRecurrentInitRange = 0.08;

class RecurrentCell {
 public:
  RecurrentCell(std::size_t input_size, std::size_t hidden_size) : input_size_(input_size), hidden_size_(hidden_size) {}
  virtual ~RecurrentCell() = default;

  virtual CellKind kind() const = 0;
  virtual CellState step(Tape& tape, Var x, const CellState& prev) const = 0;

  std::size_t input_size() const { return input_size_; }
  std::size_t hidden_size() const { return hidden_size_; }

  /// State built from a fixed hidden vector; the LSTM cell memory starts at zero.
  CellState initial_state(Tape& tape, Var h0) const;

 private:
  std::size_t input_size_;
  std::size_t hidden_size_;
};

class LstmCell final : public RecurrentCell {
 public:
  LstmCell(ParameterSet& params, const std::string& name, std::size_t input_size, std::size_t hidden_size, Rng& rng,
           double init_range = kRecurrentInitRange);

  CellKind kind() const override { return CellKind::Lstm; }
  CellState step(Tape& tape, Var x, const CellState& prev) const override;

  const LSTMWeights& weights() const { return w_; }

 private:
  LSTMWeights w_;
};

class GruCell final : public RecurrentCell {
 public:
  GruCell(ParameterSet& params, const std::string& name, std::size_t input_size, std::size_t hidden_size, Rng& rng,
          double init_range = kRecurrentInitRange);

  CellKind kind() const override { return CellKind::Gru; }
  CellState step(Tape& tape, Var x, const CellState& prev) const override;

  const GRUWeights& weights() const { return w_; }

 private:
  GRUWeights w_;
};

std::unique_ptr<RecurrentCell> make_cell(CellKind kind, ParameterSet& params, const std::string& name,
                                         std::size_t input_size, std::size_t hidden_size, Rng& rng);

/// Threads the state left to right; returns one state per input step.
std::vector<CellState> run_sequence(const RecurrentCell& cell, Tape& tape, const std::vector<Var>& inputs,
                                    const CellState& init);

}  // namespace affkit::nn
