// Copyright 2026 The affkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "affkit/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "affkit/error.hpp"

namespace affkit {

Parameter& ParameterSet::add(std::string name, Tensor value, bool decay) {
  if (find(name)) throw ContractViolation("duplicate parameter name '" + name + "'");
  auto p = std::make_unique<Parameter>();
  p->name = std::move(name);
  p->grad = Tensor(value.shape());
  p->value = std::move(value);
  p->decay = decay;
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter* ParameterSet::find(const std::string& name) {
  for (auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

const Parameter* ParameterSet::find(const std::string& name) const {
  for (const auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

std::size_t ParameterSet::element_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

const Tensor& Var::value() const { return tape_->value(id_); }
const Tensor& Var::grad() const { return tape_->grad(id_); }

Var Tape::leaf(Tensor value) { return record(std::move(value), nullptr); }

Var Tape::parameter(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  Var v = record(p.value, nullptr);
  nodes_[v.id()].param = &p;
  param_nodes_.emplace(&p, v.id());
  return v;
}

Var Tape::record(Tensor value, BackwardFn backward) {
  if (finished_) throw ContractViolation("tape already backpropagated; start a new tape");
  nodes_.push_back(Node{std::move(value), Tensor(), std::move(backward), nullptr});
  return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::grad(std::size_t id) const {
  if (!finished_) throw ContractViolation("gradient requested before backward()");
  return nodes_[id].grad;
}

void Tape::backward(Var loss) {
  if (finished_) throw ContractViolation("backward() called twice on one tape");
  if (loss.value().size() != 1)
    throw ContractViolation("backward() needs a scalar loss, got shape " + to_string(loss.shape()));
  for (auto& n : nodes_) n.grad = Tensor(n.value.shape());
  finished_ = true;
  nodes_[loss.id()].grad[0] = 1.0;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    if (nodes_[id].backward) nodes_[id].backward(*this, id);
  }
  for (auto& n : nodes_) {
    if (!n.param) continue;
    if (n.param->grad.shape() != n.param->value.shape()) n.param->zero_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) n.param->grad[i] += n.grad[i];
  }
}

namespace {

void require_rank(const Var& v, std::size_t rank, const char* op) {
  if (v.value().rank() != rank)
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                         to_string(v.shape()));
}

void require_same(const Var& a, const Var& b, const char* op) { require_same_shape(a.value(), b.value(), op); }

Tape& common_tape(const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) throw ContractViolation("operands recorded on different tapes");
  return a.tape();
}

/// Elementwise unary op whose derivative is expressed through input x and output y.
template <typename Fwd, typename Deriv>
Var unary(Var a, Fwd fwd, Deriv deriv) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = fwd(x[i]);
  const std::size_t ia = a.id();
  return a.tape().record(std::move(y), [ia, deriv](Tape& t, std::size_t self) {
    const Tensor& xv = t.value(ia);
    const Tensor& yv = t.value(self);
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_mut(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * deriv(xv[i], yv[i]);
  });
}

}  // namespace

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Var matmul(Var a, Var b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k)
    throw DimensionError("matmul: inner dimensions disagree " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  Tape& tape = common_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av(i, p);
      for (std::size_t j = 0; j < n; ++j) out(i, j) += aip * bv(p, j);
    }
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), [ia, ib, m, k, n](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& av = t.value(ia);
    const Tensor& bv = t.value(ib);
    Tensor& ga = t.grad_mut(ia);
    Tensor& gb = t.grad_mut(ib);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t p = 0; p < k; ++p) {
        double acc = 0.0;
        const double aip = av(i, p);
        for (std::size_t j = 0; j < n; ++j) {
          acc += g(i, j) * bv(p, j);
          gb(p, j) += aip * g(i, j);
        }
        ga(i, p) += acc;
      }
  });
}

Var matvec(Var w, Var x) {
  require_rank(w, 2, "matvec");
  require_rank(x, 1, "matvec");
  const std::size_t m = w.shape()[0], k = w.shape()[1];
  if (x.shape()[0] != k)
    throw DimensionError("matvec: inner dimensions disagree " + to_string(w.shape()) + " vs " +
                         to_string(x.shape()));
  Tape& tape = common_tape(w, x);
  const Tensor& wv = w.value();
  const Tensor& xv = x.value();
  Tensor out({m});
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    for (std::size_t p = 0; p < k; ++p) acc += wv(i, p) * xv[p];
    out[i] = acc;
  }
  const std::size_t iw = w.id(), ix = x.id();
  return tape.record(std::move(out), [iw, ix, m, k](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& wv = t.value(iw);
    const Tensor& xv = t.value(ix);
    Tensor& gw = t.grad_mut(iw);
    Tensor& gx = t.grad_mut(ix);
    for (std::size_t i = 0; i < m; ++i) {
      const double gi = g[i];
      if (gi == 0.0) continue;
      for (std::size_t p = 0; p < k; ++p) {
        gw(i, p) += gi * xv[p];
        gx[p] += gi * wv(i, p);
      }
    }
  });
}

Var linear(Var w, Var x, Var b) { return add_bias(matvec(w, x), b); }

Var linear2(Var wx, Var x, Var wh, Var h, Var b) {
  require_rank(wx, 2, "linear2");
  require_rank(wh, 2, "linear2");
  const std::size_t m = wx.shape()[0], kx = wx.shape()[1], kh = wh.shape()[1];
  if (x.shape() != Shape{kx} || h.shape() != Shape{kh} || wh.shape()[0] != m || b.shape() != Shape{m})
    throw DimensionError("linear2: shape mismatch Wx" + to_string(wx.shape()) + " x" + to_string(x.shape()) +
                         " Wh" + to_string(wh.shape()) + " h" + to_string(h.shape()) + " b" +
                         to_string(b.shape()));
  Tape& tape = wx.tape();
  const Tensor& wxv = wx.value();
  const Tensor& whv = wh.value();
  const Tensor& xv = x.value();
  const Tensor& hv = h.value();
  Tensor out = b.value();
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    for (std::size_t p = 0; p < kx; ++p) acc += wxv(i, p) * xv[p];
    for (std::size_t p = 0; p < kh; ++p) acc += whv(i, p) * hv[p];
    out[i] += acc;
  }
  const std::size_t iwx = wx.id(), ix = x.id(), iwh = wh.id(), ih = h.id(), ib = b.id();
  return tape.record(std::move(out), [=](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& wxv = t.value(iwx);
    const Tensor& whv = t.value(iwh);
    const Tensor& xv = t.value(ix);
    const Tensor& hv = t.value(ih);
    Tensor& gwx = t.grad_mut(iwx);
    Tensor& gwh = t.grad_mut(iwh);
    Tensor& gx = t.grad_mut(ix);
    Tensor& gh = t.grad_mut(ih);
    Tensor& gb = t.grad_mut(ib);
    for (std::size_t i = 0; i < m; ++i) {
      const double gi = g[i];
      gb[i] += gi;
      if (gi == 0.0) continue;
      for (std::size_t p = 0; p < kx; ++p) {
        gwx(i, p) += gi * xv[p];
        gx[p] += gi * wxv(i, p);
      }
      for (std::size_t p = 0; p < kh; ++p) {
        gwh(i, p) += gi * hv[p];
        gh[p] += gi * whv(i, p);
      }
    }
  });
}

Var add(Var a, Var b) {
  require_same(a, b, "add");
  Tape& tape = common_tape(a, b);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_mut(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    Tensor& gb = t.grad_mut(ib);
    for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
  });
}

Var sub(Var a, Var b) {
  require_same(a, b, "sub");
  Tape& tape = common_tape(a, b);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_mut(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    Tensor& gb = t.grad_mut(ib);
    for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
  });
}

Var mul(Var a, Var b) {
  require_same(a, b, "mul");
  Tape& tape = common_tape(a, b);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& av = t.value(ia);
    const Tensor& bv = t.value(ib);
    Tensor& ga = t.grad_mut(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    Tensor& gb = t.grad_mut(ib);
    for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
  });
}

Var add_bias(Var x, Var bias) {
  require_rank(bias, 1, "add_bias");
  const std::size_t n = bias.shape()[0];
  if (x.value().rank() == 0 || x.shape().back() != n)
    throw DimensionError("add_bias: trailing extent of " + to_string(x.shape()) + " does not match bias " +
                         to_string(bias.shape()));
  Tape& tape = common_tape(x, bias);
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bias.value()[i % n];
  const std::size_t ix = x.id(), ib = bias.id();
  return tape.record(std::move(out), [ix, ib, n](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad_mut(ix);
    Tensor& gb = t.grad_mut(ib);
    for (std::size_t i = 0; i < g.size(); ++i) {
      gx[i] += g[i];
      gb[i % n] += g[i];
    }
  });
}

Var scale_trailing(Var x, Var scale) {
  require_rank(scale, 1, "scale_trailing");
  const std::size_t n = scale.shape()[0];
  if (x.value().rank() == 0 || x.shape().back() != n)
    throw DimensionError("scale_trailing: trailing extent of " + to_string(x.shape()) + " does not match " +
                         to_string(scale.shape()));
  Tape& tape = common_tape(x, scale);
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= scale.value()[i % n];
  const std::size_t ix = x.id(), is = scale.id();
  return tape.record(std::move(out), [ix, is, n](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& xv = t.value(ix);
    const Tensor& sv = t.value(is);
    Tensor& gx = t.grad_mut(ix);
    Tensor& gs = t.grad_mut(is);
    for (std::size_t i = 0; i < g.size(); ++i) {
      gx[i] += g[i] * sv[i % n];
      gs[i % n] += g[i] * xv[i];
    }
  });
}

Var affine(Var a, double scale, double shift) {
  return unary(a, [scale, shift](double x) { return scale * x + shift; },
               [scale](double, double) { return scale; });
}

Var sigmoid(Var a) {
  return unary(a, [](double x) { return sigmoid(x); }, [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var relu(Var a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a, double eps) {
  return unary(a, [eps](double x) { return std::log(std::max(x, eps)); },
               [eps](double x, double) { return x > eps ? 1.0 / x : 0.0; });
}

Var square(Var a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var sum(Var a) {
  const std::size_t ia = a.id();
  return a.tape().record(Tensor::scalar(sum(a.value())), [ia](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    Tensor& ga = t.grad_mut(ia);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

Var mean(Var a) { return affine(sum(a), 1.0 / static_cast<double>(a.size()), 0.0); }

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), [ia](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_mut(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Var transpose(Var a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  Tensor out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(j, i) = a.value()(i, j);
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), [ia, m, n](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_mut(ia);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga(i, j) += g(j, i);
  });
}

Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractViolation("concat of zero tensors");
  std::vector<double> values;
  std::vector<std::size_t> ids;
  for (const Var& p : parts) {
    if (&p.tape() != &parts.front().tape()) throw ContractViolation("operands recorded on different tapes");
    values.insert(values.end(), p.value().data().begin(), p.value().data().end());
    ids.push_back(p.id());
  }
  const std::size_t n = values.size();
  return parts.front().tape().record(Tensor({n}, std::move(values)), [ids](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    std::size_t offset = 0;
    for (std::size_t id : ids) {
      Tensor& gp = t.grad_mut(id);
      for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[offset + i];
      offset += gp.size();
    }
  });
}

Var slice(Var a, std::size_t offset, std::size_t length) {
  if (length == 0 || offset + length > a.size())
    throw DimensionError("slice [" + std::to_string(offset) + ", +" + std::to_string(length) + ") out of range for " +
                         to_string(a.shape()));
  std::vector<double> values(a.value().data().begin() + static_cast<std::ptrdiff_t>(offset),
                             a.value().data().begin() + static_cast<std::ptrdiff_t>(offset + length));
  const std::size_t ia = a.id();
  return a.tape().record(Tensor({length}, std::move(values)), [ia, offset](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_mut(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[offset + i] += g[i];
  });
}

Tensor softmax_lastaxis(const Tensor& logits) {
  if (logits.rank() == 0) throw DimensionError("softmax of a scalar");
  const std::size_t k = logits.shape().back();
  Tensor out(logits.shape());
  for (std::size_t row = 0; row < logits.size() / k; ++row) {
    const double* x = logits.data().data() + row * k;
    double* y = out.data().data() + row * k;
    const double mx = *std::max_element(x, x + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += (y[j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < k; ++j) y[j] /= z;
  }
  return out;
}

Var softmax(Var a) {
  Tensor out = softmax_lastaxis(a.value());
  const std::size_t k = a.shape().back();
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), [ia, k](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    Tensor& ga = t.grad_mut(ia);
    for (std::size_t row = 0; row < g.size() / k; ++row) {
      const std::size_t base = row * k;
      double gy = 0.0;
      for (std::size_t j = 0; j < k; ++j) gy += g[base + j] * y[base + j];
      for (std::size_t j = 0; j < k; ++j) ga[base + j] += y[base + j] * (g[base + j] - gy);
    }
  });
}

}  // namespace affkit
