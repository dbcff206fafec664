// Copyright 2026 The affkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "affkit/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "affkit/error.hpp"

namespace affkit::nn {

namespace {

void require_rank(const Var& v, std::size_t rank, const char* op) {
  if (v.value().rank() != rank)
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         to_string(v.shape()));
}

double glorot_limit(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

}  // namespace

std::size_t conv_output_extent(std::size_t extent, std::size_t kernel, std::size_t stride, std::size_t pad,
                               std::size_t dilation) {
  if (kernel == 0 || stride == 0 || dilation == 0) throw ParameterError("conv: kernel, stride, dilation must be positive");
  const std::size_t dilated = (kernel - 1) * dilation + 1;
  const std::size_t padded = extent + 2 * pad;
  if (dilated > padded)
    throw DimensionError("conv: dilated kernel " + std::to_string(dilated) + " larger than padded input " +
                         std::to_string(padded));
  return (padded - dilated) / stride + 1;
}

Var conv2d(Var x, Var weights, Var bias, const Conv2DParams& p) {
  require_rank(x, 3, "conv2d");
  require_rank(weights, 4, "conv2d");
  const std::size_t C = x.shape()[0], H = x.shape()[1], W = x.shape()[2];
  const std::size_t F = weights.shape()[0], kh = weights.shape()[2], kw = weights.shape()[3];
  if (weights.shape()[1] != C || bias.shape() != Shape{F} || kh != p.kernel_h || kw != p.kernel_w)
    throw DimensionError("conv2d: input " + to_string(x.shape()) + ", weights " + to_string(weights.shape()) +
                         ", bias " + to_string(bias.shape()) + " disagree");
  const std::size_t Ho = conv_output_extent(H, kh, p.stride, p.pad_h, p.dilation);
  const std::size_t Wo = conv_output_extent(W, kw, p.stride, p.pad_w, p.dilation);
  const auto s = static_cast<long>(p.stride), dil = static_cast<long>(p.dilation);
  const auto ph = static_cast<long>(p.pad_h), pw = static_cast<long>(p.pad_w);
  const long Hl = static_cast<long>(H), Wl = static_cast<long>(W);

  // Visits every (output, input, weight) triple that contributes.
  auto for_each_tap = [=](auto&& fn) {
    for (std::size_t f = 0; f < F; ++f)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t ky = 0; ky < kh; ++ky)
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const std::size_t widx = ((f * C + c) * kh + ky) * kw + kx;
            for (std::size_t oy = 0; oy < Ho; ++oy) {
              const long iy = static_cast<long>(oy) * s - ph + static_cast<long>(ky) * dil;
              if (iy < 0 || iy >= Hl) continue;
              const std::size_t obase = (f * Ho + oy) * Wo;
              const std::size_t ibase = (c * H + static_cast<std::size_t>(iy)) * W;
              for (std::size_t ox = 0; ox < Wo; ++ox) {
                const long ix = static_cast<long>(ox) * s - pw + static_cast<long>(kx) * dil;
                if (ix < 0 || ix >= Wl) continue;
                fn(obase + ox, ibase + static_cast<std::size_t>(ix), widx);
              }
            }
          }
  };

  Tensor out({F, Ho, Wo});
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t i = 0; i < Ho * Wo; ++i) out[f * Ho * Wo + i] = bias.value()[f];
  {
    const double* xv = x.value().data().data();
    const double* wv = weights.value().data().data();
    double* ov = out.data().data();
    for_each_tap([&](std::size_t o, std::size_t i, std::size_t w) { ov[o] += wv[w] * xv[i]; });
  }

  const std::size_t ix = x.id(), iw = weights.id(), ib = bias.id();
  const std::size_t plane = Ho * Wo;
  return x.tape().record(std::move(out), [=](Tape& t, std::size_t self) {
    const double* g = t.grad(self).data().data();
    const double* xv = t.value(ix).data().data();
    const double* wv = t.value(iw).data().data();
    double* gx = t.grad_mut(ix).data().data();
    double* gw = t.grad_mut(iw).data().data();
    Tensor& gb = t.grad_mut(ib);
    for (std::size_t f = 0; f < F; ++f)
      for (std::size_t i = 0; i < plane; ++i) gb[f] += g[f * plane + i];
    for_each_tap([&](std::size_t o, std::size_t i, std::size_t w) {
      gx[i] += wv[w] * g[o];
      gw[w] += xv[i] * g[o];
    });
  });
}

std::size_t deconv2d_size(std::size_t input, std::size_t stride, std::size_t kernel, std::size_t pad) {
  if (input == 0 || stride == 0 || kernel == 0)
    throw ParameterError("deconv2d_size: input, stride and kernel must be positive");
  const long out = static_cast<long>(stride) * (static_cast<long>(input) - 1) + static_cast<long>(kernel) -
                   2 * static_cast<long>(pad);
  if (out <= 0)
    throw ParameterError("deconv2d_size: non-positive output extent " + std::to_string(out));
  return static_cast<std::size_t>(out);
}

Var deconv2d(Var x, Var weights, Var bias, std::size_t stride, std::size_t pad) {
  require_rank(x, 3, "deconv2d");
  require_rank(weights, 4, "deconv2d");
  const std::size_t C = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  const std::size_t F = weights.shape()[1], kh = weights.shape()[2], kw = weights.shape()[3];
  if (weights.shape()[0] != C || bias.shape() != Shape{F})
    throw DimensionError("deconv2d: input " + to_string(x.shape()) + ", weights " + to_string(weights.shape()) +
                         ", bias " + to_string(bias.shape()) + " disagree");
  const std::size_t Ho = deconv2d_size(h, stride, kh, pad);
  const std::size_t Wo = deconv2d_size(w, stride, kw, pad);
  const auto s = static_cast<long>(stride), d = static_cast<long>(pad);
  const long Hl = static_cast<long>(Ho), Wl = static_cast<long>(Wo);

  auto for_each_tap = [=](auto&& fn) {
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t f = 0; f < F; ++f)
        for (std::size_t ky = 0; ky < kh; ++ky)
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const std::size_t widx = ((c * F + f) * kh + ky) * kw + kx;
            for (std::size_t iy = 0; iy < h; ++iy) {
              const long oy = static_cast<long>(iy) * s - d + static_cast<long>(ky);
              if (oy < 0 || oy >= Hl) continue;
              const std::size_t obase = (f * Ho + static_cast<std::size_t>(oy)) * Wo;
              const std::size_t ibase = (c * h + iy) * w;
              for (std::size_t ix = 0; ix < w; ++ix) {
                const long ox = static_cast<long>(ix) * s - d + static_cast<long>(kx);
                if (ox < 0 || ox >= Wl) continue;
                fn(obase + static_cast<std::size_t>(ox), ibase + ix, widx);
              }
            }
          }
  };

  Tensor out({F, Ho, Wo});
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t i = 0; i < Ho * Wo; ++i) out[f * Ho * Wo + i] = bias.value()[f];
  {
    const double* xv = x.value().data().data();
    const double* wv = weights.value().data().data();
    double* ov = out.data().data();
    for_each_tap([&](std::size_t o, std::size_t i, std::size_t widx) { ov[o] += wv[widx] * xv[i]; });
  }

  const std::size_t ix = x.id(), iw = weights.id(), ib = bias.id();
  const std::size_t plane = Ho * Wo;
  return x.tape().record(std::move(out), [=](Tape& t, std::size_t self) {
    const double* g = t.grad(self).data().data();
    const double* xv = t.value(ix).data().data();
    const double* wv = t.value(iw).data().data();
    double* gx = t.grad_mut(ix).data().data();
    double* gw = t.grad_mut(iw).data().data();
    Tensor& gb = t.grad_mut(ib);
    for (std::size_t f = 0; f < F; ++f)
      for (std::size_t i = 0; i < plane; ++i) gb[f] += g[f * plane + i];
    for_each_tap([&](std::size_t o, std::size_t i, std::size_t widx) {
      gx[i] += wv[widx] * g[o];
      gw[widx] += xv[i] * g[o];
    });
  });
}

PoolOutput maxpool2d(Var x) {
  require_rank(x, 3, "maxpool2d");
  const std::size_t C = x.shape()[0], H = x.shape()[1], W = x.shape()[2];
  const std::size_t Ho = (H + 1) / 2, Wo = (W + 1) / 2;
  const Tensor& xv = x.value();
  Tensor out({C, Ho, Wo});
  PoolIndices idx{x.shape(), {C, Ho, Wo}, std::vector<std::size_t>(C * Ho * Wo)};
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t oy = 0; oy < Ho; ++oy)
      for (std::size_t ox = 0; ox < Wo; ++ox) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_idx = (c * H + 2 * oy) * W + 2 * ox;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t iy = 2 * oy + dy, ix = 2 * ox + dx;
            if (iy >= H || ix >= W) continue;
            const std::size_t flat = (c * H + iy) * W + ix;
            if (xv[flat] > best) {
              best = xv[flat];
              best_idx = flat;
            }
          }
        const std::size_t o = (c * Ho + oy) * Wo + ox;
        out[o] = best;
        idx.argmax[o] = best_idx;
      }
  const std::size_t ix = x.id();
  std::vector<std::size_t> argmax = idx.argmax;
  Var values = x.tape().record(std::move(out), [ix, argmax = std::move(argmax)](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad_mut(ix);
    for (std::size_t o = 0; o < g.size(); ++o) gx[argmax[o]] += g[o];
  });
  return {values, std::move(idx)};
}

Var maxunpool2d(Var pooled, const PoolIndices& indices) {
  if (pooled.shape() != indices.output_shape || indices.argmax.size() != pooled.size())
    throw ContractViolation("maxunpool2d: pooled shape " + to_string(pooled.shape()) +
                            " inconsistent with indices for " + to_string(indices.output_shape));
  const std::size_t n = numel(indices.input_shape);
  for (std::size_t a : indices.argmax)
    if (a >= n) throw ContractViolation("maxunpool2d: index " + std::to_string(a) + " out of range");
  Tensor out(indices.input_shape);
  for (std::size_t o = 0; o < pooled.size(); ++o) out[indices.argmax[o]] = pooled.value()[o];
  const std::size_t ip = pooled.id();
  return pooled.tape().record(std::move(out), [ip, argmax = indices.argmax](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gp = t.grad_mut(ip);
    for (std::size_t o = 0; o < argmax.size(); ++o) gp[o] += g[argmax[o]];
  });
}

bool indices_within_windows(const PoolIndices& indices) {
  if (indices.input_shape.size() != 3 || indices.output_shape.size() != 3) return false;
  const std::size_t H = indices.input_shape[1], W = indices.input_shape[2];
  const std::size_t Ho = indices.output_shape[1], Wo = indices.output_shape[2];
  for (std::size_t o = 0; o < indices.argmax.size(); ++o) {
    const std::size_t c = o / (Ho * Wo), oy = (o / Wo) % Ho, ox = o % Wo;
    const std::size_t a = indices.argmax[o];
    if (a / (H * W) != c) return false;
    const std::size_t iy = (a / W) % H, ix = a % W;
    if (iy / 2 != oy || ix / 2 != ox) return false;
  }
  return true;
}

Var maxpool_time(Var x) {
  if (x.value().rank() < 1) throw DimensionError("maxpool_time: scalar input");
  const std::size_t T = x.shape().back();
  if (T < 2) throw DimensionError("maxpool_time: time axis shorter than the window in " + to_string(x.shape()));
  const std::size_t To = T / 2;
  const std::size_t rows = x.size() / T;
  Shape out_shape = x.shape();
  out_shape.back() = To;
  Tensor out(out_shape);
  std::vector<std::size_t> argmax(rows * To);
  const Tensor& xv = x.value();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t t = 0; t < To; ++t) {
      const std::size_t a = r * T + 2 * t;
      const std::size_t pick = xv[a + 1] > xv[a] ? a + 1 : a;
      out[r * To + t] = xv[pick];
      argmax[r * To + t] = pick;
    }
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), [ix, argmax = std::move(argmax)](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad_mut(ix);
    for (std::size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += g[o];
  });
}

Var dropout(Var x, double rate, Mode mode, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ParameterError("dropout: rate must be in [0, 1), got " + std::to_string(rate));
  if (mode == Mode::Eval || rate == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.size());
  for (double& m : mask) m = rng.bernoulli(rate) ? 0.0 : keep_scale;
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), [ix, mask = std::move(mask)](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad_mut(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
  });
}

BatchNormResult batchnorm_train(Var x, Var gamma, Var beta, double eps) {
  require_rank(x, 2, "batchnorm");
  const std::size_t B = x.shape()[0], F = x.shape()[1];
  if (gamma.shape() != Shape{F} || beta.shape() != Shape{F})
    throw DimensionError("batchnorm: gamma/beta must be [" + std::to_string(F) + "]");
  if (B < 2) throw ContractViolation("batchnorm: training mode needs a batch of at least 2");
  const Tensor& xv = x.value();
  Tensor mean({F}), var({F});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t f = 0; f < F; ++f) mean[f] += xv(b, f);
  for (std::size_t f = 0; f < F; ++f) mean[f] /= static_cast<double>(B);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t f = 0; f < F; ++f) var[f] += (xv(b, f) - mean[f]) * (xv(b, f) - mean[f]);
  for (std::size_t f = 0; f < F; ++f) var[f] /= static_cast<double>(B);

  Tensor xhat({B, F}), out({B, F});
  Tensor inv_std({F});
  for (std::size_t f = 0; f < F; ++f) inv_std[f] = 1.0 / std::sqrt(var[f] + eps);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t f = 0; f < F; ++f) {
      xhat(b, f) = (xv(b, f) - mean[f]) * inv_std[f];
      out(b, f) = gamma.value()[f] * xhat(b, f) + beta.value()[f];
    }

  const std::size_t ix = x.id(), ig = gamma.id(), ibeta = beta.id();
  Var y = x.tape().record(std::move(out), [=](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& gam = t.value(ig);
    Tensor& gx = t.grad_mut(ix);
    Tensor& gg = t.grad_mut(ig);
    Tensor& gbeta = t.grad_mut(ibeta);
    const double n = static_cast<double>(B);
    for (std::size_t f = 0; f < F; ++f) {
      double sum_d = 0.0, sum_dx = 0.0;
      for (std::size_t b = 0; b < B; ++b) {
        const double d = g(b, f) * gam[f];
        sum_d += d;
        sum_dx += d * xhat(b, f);
        gg[f] += g(b, f) * xhat(b, f);
        gbeta[f] += g(b, f);
      }
      for (std::size_t b = 0; b < B; ++b) {
        const double d = g(b, f) * gam[f];
        gx(b, f) += inv_std[f] / n * (n * d - sum_d - xhat(b, f) * sum_dx);
      }
    }
  });
  return {y, std::move(mean), std::move(var)};
}

Var batchnorm_eval(Var x, Var gamma, Var beta, const Tensor& mean, const Tensor& var, double eps) {
  require_rank(x, 2, "batchnorm");
  const std::size_t F = x.shape()[1];
  if (mean.shape() != Shape{F} || var.shape() != Shape{F})
    throw DimensionError("batchnorm: statistics must be [" + std::to_string(F) + "]");
  Tape& tape = x.tape();
  Tensor scale({F}), shift({F});
  for (std::size_t f = 0; f < F; ++f) {
    scale[f] = 1.0 / std::sqrt(var[f] + eps);
    shift[f] = -mean[f] * scale[f];
  }
  Var normalized = add_bias(scale_trailing(x, tape.leaf(std::move(scale))), tape.leaf(std::move(shift)));
  return add_bias(scale_trailing(normalized, gamma), beta);
}

BatchNorm::BatchNorm(ParameterSet& params, const std::string& name, std::size_t features, double eps,
                     double momentum)
    : gamma_(&params.add(name + ".gamma", Tensor({features}, 1.0), false)),
      beta_(&params.add(name + ".beta", Tensor({features}), false)),
      eps_(eps),
      momentum_(momentum),
      running_mean_({features}),
      running_var_({features}, 1.0) {}

Var BatchNorm::forward(Tape& tape, Var x, Mode mode) {
  Var gamma = tape.parameter(*gamma_);
  Var beta = tape.parameter(*beta_);
  if (mode == Mode::Eval) return batchnorm_eval(x, gamma, beta, running_mean_, running_var_, eps_);
  BatchNormResult r = batchnorm_train(x, gamma, beta, eps_);
  for (std::size_t f = 0; f < r.mean.size(); ++f) {
    running_mean_[f] = momentum_ * running_mean_[f] + (1.0 - momentum_) * r.mean[f];
    running_var_[f] = momentum_ * running_var_[f] + (1.0 - momentum_) * r.var[f];
  }
  return r.y;
}

Var softmax_channels(Var x) {
  require_rank(x, 3, "softmax_channels");
  const std::size_t C = x.shape()[0], plane = x.shape()[1] * x.shape()[2];
  const Tensor& xv = x.value();
  Tensor out(x.shape());
  for (std::size_t p = 0; p < plane; ++p) {
    double mx = xv[p];
    for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, xv[c * plane + p]);
    double z = 0.0;
    for (std::size_t c = 0; c < C; ++c) z += (out[c * plane + p] = std::exp(xv[c * plane + p] - mx));
    for (std::size_t c = 0; c < C; ++c) out[c * plane + p] /= z;
  }
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), [ix, C, plane](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    Tensor& gx = t.grad_mut(ix);
    for (std::size_t p = 0; p < plane; ++p) {
      double gy = 0.0;
      for (std::size_t c = 0; c < C; ++c) gy += g[c * plane + p] * y[c * plane + p];
      for (std::size_t c = 0; c < C; ++c) gx[c * plane + p] += y[c * plane + p] * (g[c * plane + p] - gy);
    }
  });
}

ConvLayer::ConvLayer(ParameterSet& params, const std::string& name, std::size_t in_channels, Conv2DParams p, Rng& rng)
    : geometry(p) {
  const std::size_t fan_in = in_channels * p.kernel_h * p.kernel_w;
  const std::size_t fan_out = p.filters * p.kernel_h * p.kernel_w;
  const double limit = glorot_limit(fan_in, fan_out);
  weights = &params.add(name + ".weight", Tensor::uniform({p.filters, in_channels, p.kernel_h, p.kernel_w}, -limit, limit, rng));
  bias = &params.add(name + ".bias", Tensor({p.filters}), false);
}

Var ConvLayer::forward(Tape& tape, Var x) const {
  return conv2d(x, tape.parameter(*weights), tape.parameter(*bias), geometry);
}

DeconvLayer::DeconvLayer(ParameterSet& params, const std::string& name, std::size_t in_channels,
                         std::size_t out_channels, std::size_t kernel, std::size_t stride_, std::size_t pad_, Rng& rng)
    : stride(stride_), pad(pad_) {
  const double limit = glorot_limit(in_channels * kernel * kernel / (stride * stride), out_channels * kernel * kernel / (stride * stride));
  weights = &params.add(name + ".weight", Tensor::uniform({in_channels, out_channels, kernel, kernel}, -limit, limit, rng));
  bias = &params.add(name + ".bias", Tensor({out_channels}), false);
}

Var DeconvLayer::forward(Tape& tape, Var x) const {
  return deconv2d(x, tape.parameter(*weights), tape.parameter(*bias), stride, pad);
}

DenseLayer::DenseLayer(ParameterSet& params, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
  const double limit = glorot_limit(in, out);
  weights = &params.add(name + ".weight", Tensor::uniform({out, in}, -limit, limit, rng));
  bias = &params.add(name + ".bias", Tensor({out}), false);
}

Var DenseLayer::forward(Tape& tape, Var x) const {
  return linear(tape.parameter(*weights), x, tape.parameter(*bias));
}

}  // namespace affkit::nn
