// Copyright 2026 The affkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "affkit/recurrent.hpp"

#include "affkit/error.hpp"

namespace affkit::nn {

CellKind parse_cell_kind(const std::string& name) {
  if (name == "lstm") return CellKind::Lstm;
  if (name == "gru") return CellKind::Gru;
  throw ParameterError("unknown cell kind '" + name + "' (expected lstm or gru)");
}

std::string to_string(CellKind kind) { return kind == CellKind::Lstm ? "lstm" : "gru"; }

namespace {

Var gate(Tape& tape, Var x, Var h, Parameter* wx, Parameter* wh, Parameter* b) {
  return linear2(tape.parameter(*wx), x, tape.parameter(*wh), h, tape.parameter(*b));
}

void add_gate(ParameterSet& params, const std::string& name, const std::string& gate, std::size_t in,
              std::size_t hidden, Rng& rng, double range, Parameter*& wx, Parameter*& wh, Parameter*& b) {
  wx = &params.add(name + ".W_x" + gate, Tensor::uniform({hidden, in}, -range, range, rng));
  wh = &params.add(name + ".W_h" + gate, Tensor::uniform({hidden, hidden}, -range, range, rng));
  b = &params.add(name + ".b_" + gate, Tensor::uniform({hidden}, -range, range, rng), false);
}

void check_input(const RecurrentCell& cell, Var x, const Var& h) {
  if (x.shape() != Shape{cell.input_size()} || h.shape() != Shape{cell.hidden_size()})
    throw DimensionError("recurrent step: input " + affkit::to_string(x.shape()) + " / state " + affkit::to_string(h.shape()) +
                         " do not match cell [" + std::to_string(cell.input_size()) + "] -> [" +
                         std::to_string(cell.hidden_size()) + "]");
}

}  // namespace

CellState lstm_step(Tape& tape, Var x, const CellState& prev, const LSTMWeights& w) {
  Var i = sigmoid(gate(tape, x, prev.h, w.w_xi, w.w_hi, w.b_i));
  Var f = sigmoid(gate(tape, x, prev.h, w.w_xf, w.w_hf, w.b_f));
  Var o = sigmoid(gate(tape, x, prev.h, w.w_xo, w.w_ho, w.b_o));
  Var g = tanh(gate(tape, x, prev.h, w.w_xg, w.w_hg, w.b_g));
  Var c = f * prev.c + i * g;
  Var h = o * tanh(c);
  return {h, c};
}

Var gru_step(Tape& tape, Var x, Var prev_h, const GRUWeights& w) {
  Var r = sigmoid(gate(tape, x, prev_h, w.w_xr, w.w_hr, w.b_r));
  Var z = sigmoid(gate(tape, x, prev_h, w.w_xz, w.w_hz, w.b_z));
  Var candidate = tanh(gate(tape, x, r * prev_h, w.w_xh, w.w_hh, w.b_h));
  return z * prev_h + affine(z, -1.0, 1.0) * candidate;
}

CellState RecurrentCell::initial_state(Tape& tape, Var h0) const {
  if (h0.shape() != Shape{hidden_size_})
    throw DimensionError("initial state " + affkit::to_string(h0.shape()) + " does not match hidden size " +
                         std::to_string(hidden_size_));
  return {h0, tape.leaf(Tensor({hidden_size_}))};
}

LstmCell::LstmCell(ParameterSet& params, const std::string& name, std::size_t input_size, std::size_t hidden_size,
                   Rng& rng, double init_range)
    : RecurrentCell(input_size, hidden_size) {
  add_gate(params, name, "i", input_size, hidden_size, rng, init_range, w_.w_xi, w_.w_hi, w_.b_i);
  add_gate(params, name, "f", input_size, hidden_size, rng, init_range, w_.w_xf, w_.w_hf, w_.b_f);
  add_gate(params, name, "o", input_size, hidden_size, rng, init_range, w_.w_xo, w_.w_ho, w_.b_o);
  add_gate(params, name, "g", input_size, hidden_size, rng, init_range, w_.w_xg, w_.w_hg, w_.b_g);
}

CellState LstmCell::step(Tape& tape, Var x, const CellState& prev) const {
  check_input(*this, x, prev.h);
  return lstm_step(tape, x, prev, w_);
}

GruCell::GruCell(ParameterSet& params, const std::string& name, std::size_t input_size, std::size_t hidden_size,
                 Rng& rng, double init_range)
    : RecurrentCell(input_size, hidden_size) {
  add_gate(params, name, "r", input_size, hidden_size, rng, init_range, w_.w_xr, w_.w_hr, w_.b_r);
  add_gate(params, name, "z", input_size, hidden_size, rng, init_range, w_.w_xz, w_.w_hz, w_.b_z);
  add_gate(params, name, "h", input_size, hidden_size, rng, init_range, w_.w_xh, w_.w_hh, w_.b_h);
}

CellState GruCell::step(Tape& tape, Var x, const CellState& prev) const {
  check_input(*this, x, prev.h);
  return {gru_step(tape, x, prev.h, w_), prev.c};
}

std::unique_ptr<RecurrentCell> make_cell(CellKind kind, ParameterSet& params, const std::string& name,
                                         std::size_t input_size, std::size_t hidden_size, Rng& rng) {
  if (kind == CellKind::Lstm) return std::make_unique<LstmCell>(params, name, input_size, hidden_size, rng);
  return std::make_unique<GruCell>(params, name, input_size, hidden_size, rng);
}

std::vector<CellState> run_sequence(const RecurrentCell& cell, Tape& tape, const std::vector<Var>& inputs,
                                    const CellState& init) {
  if (inputs.empty()) throw ContractViolation("run_sequence: empty input sequence");
  std::vector<CellState> states;
  states.reserve(inputs.size());
  CellState s = init;
  for (const Var& x : inputs) {
    s = cell.step(tape, x, s);
    states.push_back(s);
  }
  return states;
}

}  // namespace affkit::nn
