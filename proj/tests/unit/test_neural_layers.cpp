// Copyright 2026 The affkit Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>

#include "affkit/error.hpp"
#include "affkit/layers.hpp"
#include "affkit/rng.hpp"

using namespace affkit;
using namespace affkit::nn;

namespace {

Tensor conv_oracle(const Tensor& x, const Tensor& w, const Tensor& b, const Conv2DParams& p) {
  const long C = static_cast<long>(x.dim(0)), H = static_cast<long>(x.dim(1)), W = static_cast<long>(x.dim(2));
  const long F = static_cast<long>(w.dim(0)), kh = static_cast<long>(w.dim(2)), kw = static_cast<long>(w.dim(3));
  const long s = static_cast<long>(p.stride), d = static_cast<long>(p.dilation);
  const long ph = static_cast<long>(p.pad_h), pw = static_cast<long>(p.pad_w);
  const long Ho = (H + 2 * ph - ((kh - 1) * d + 1)) / s + 1, Wo = (W + 2 * pw - ((kw - 1) * d + 1)) / s + 1;
  Tensor out({static_cast<std::size_t>(F), static_cast<std::size_t>(Ho), static_cast<std::size_t>(Wo)});
  for (long f = 0; f < F; ++f)
    for (long oy = 0; oy < Ho; ++oy)
      for (long ox = 0; ox < Wo; ++ox) {
        double acc = b[static_cast<std::size_t>(f)];
        for (long c = 0; c < C; ++c)
          for (long ky = 0; ky < kh; ++ky)
            for (long kx = 0; kx < kw; ++kx) {
              const long iy = oy * s - ph + ky * d, ix = ox * s - pw + kx * d;
              if (iy < 0 || ix < 0 || iy >= H || ix >= W) continue;
              acc += w[static_cast<std::size_t>(((f * C + c) * kh + ky) * kw + kx)] *
                     x(static_cast<std::size_t>(c), static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
            }
        out(static_cast<std::size_t>(f), static_cast<std::size_t>(oy), static_cast<std::size_t>(ox)) = acc;
      }
  return out;
}

Conv2DParams params(std::size_t f, std::size_t k, std::size_t stride = 1, std::size_t pad = 0, std::size_t dil = 1) {
  Conv2DParams p;
  p.filters = f;
  p.kernel_h = p.kernel_w = k;
  p.stride = stride;
  p.pad_h = p.pad_w = pad;
  p.dilation = dil;
  return p;
}

}  // namespace

TEST_CASE("conv2d") {
  Rng rng(1);
  Tape tape;
  SUBCASE("1x1 identity kernel") {
    const Tensor x = Tensor::uniform({1, 4, 5}, -1, 1, rng);
    const Var y = conv2d(tape.leaf(x), tape.leaf(Tensor({1, 1, 1, 1}, 1.0)), tape.leaf(Tensor({1})), params(1, 1));
    CHECK(y.value() == x);
  }
  SUBCASE("zero weights give the bias") {
    const Var y = conv2d(tape.leaf(Tensor::uniform({2, 5, 5}, -1, 1, rng)), tape.leaf(Tensor({3, 2, 3, 3})),
                         tape.leaf(Tensor({3}, {0.5, -1, 2})), params(3, 3));
    for (std::size_t f = 0; f < 3; ++f)
      for (std::size_t i = 0; i < 9; ++i) CHECK(y.value()[f * 9 + i] == std::vector<double>{0.5, -1, 2}[f]);
  }
  SUBCASE("nested-loop oracle") {
    for (int trial = 0; trial < 20; ++trial) {
      const Tensor x = Tensor::uniform({1, 5, 5}, -1, 1, rng), w = Tensor::uniform({1, 1, 3, 3}, -1, 1, rng);
      const Tensor b = Tensor::uniform({1}, -1, 1, rng);
      const Var y = conv2d(tape.leaf(x), tape.leaf(w), tape.leaf(b), params(1, 3));
      CHECK(y.shape() == Shape{1, 3, 3});
      CHECK(max_abs_diff(y.value(), conv_oracle(x, w, b, params(1, 3))) <= 1e-12);
    }
    const Tensor x = Tensor::uniform({2, 9, 8}, -1, 1, rng), w = Tensor::uniform({3, 2, 3, 3}, -1, 1, rng);
    const Tensor b = Tensor::uniform({3}, -1, 1, rng);
    const Conv2DParams atrous = params(3, 3, 2, 2, 2);
    CHECK(max_abs_diff(conv2d(tape.leaf(x), tape.leaf(w), tape.leaf(b), atrous).value(), conv_oracle(x, w, b, atrous)) <=
          1e-12);
  }
  SUBCASE("output extent and errors") {
    CHECK(conv_output_extent(7, 3, 1, 0, 1) == 5);
    CHECK(conv_output_extent(7, 3, 2, 1, 1) == 4);
    CHECK(conv_output_extent(7, 3, 1, 2, 2) == 7);
    CHECK_THROWS_AS(conv_output_extent(2, 5, 1, 0, 1), DimensionError);
    CHECK_THROWS_AS(conv2d(tape.leaf(Tensor({1, 2, 2})), tape.leaf(Tensor({1, 1, 3, 3})), tape.leaf(Tensor({1})),
                           params(1, 3)),
                    DimensionError);
  }
}

TEST_CASE("deconv2d sizing") {
  CHECK(deconv2d_size(7, 4, 8, 1) == 30);
  CHECK(deconv2d_size(30, 4, 8, 1) == 122);
  CHECK(deconv2d_size(122, 2, 4, 1) == 244);
  CHECK_THROWS_AS(deconv2d_size(1, 1, 1, 1), ParameterError);
  CHECK_THROWS_AS(deconv2d_size(0, 2, 4, 1), ParameterError);

  Tape tape;
  Var x = tape.leaf(Tensor({1, 7, 7}, 1.0));
  const std::size_t expected[] = {30, 122, 244};
  const std::size_t stride[] = {4, 4, 2}, kernel[] = {8, 8, 4};
  for (int i = 0; i < 3; ++i) {
    x = deconv2d(x, tape.leaf(Tensor({1, 1, kernel[i], kernel[i]}, 0.01)), tape.leaf(Tensor({1})), stride[i], 1);
    CHECK(x.shape() == Shape{1, expected[i], expected[i]});
  }
}

TEST_CASE("deconv2d") {
  Rng rng(2);
  Tape tape;
  const Var zero = deconv2d(tape.leaf(Tensor::uniform({2, 3, 3}, -1, 1, rng)), tape.leaf(Tensor({2, 3, 4, 4})),
                            tape.leaf(Tensor({3}, {1, 2, 3})), 2, 1);
  CHECK(zero.shape() == Shape{3, 6, 6});
  for (std::size_t f = 0; f < 3; ++f)
    for (std::size_t i = 0; i < 36; ++i) CHECK(zero.value()[f * 36 + i] == static_cast<double>(f + 1));

  // <deconv(x), y> == <x, conv(y)> with the same weight array.
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t C = 1 + rng.below(3), F = 1 + rng.below(3), k = 2 + rng.below(3), s = 1 + rng.below(3);
    const std::size_t pad = rng.below(k / 2 + 1), h = 2 + rng.below(4), w = 2 + rng.below(4);
    const std::size_t Ho = deconv2d_size(h, s, k, pad), Wo = deconv2d_size(w, s, k, pad);
    const Tensor x = Tensor::uniform({C, h, w}, -1, 1, rng), y = Tensor::uniform({F, Ho, Wo}, -1, 1, rng);
    const Tensor W = Tensor::uniform({C, F, k, k}, -1, 1, rng);
    const Tensor dx = deconv2d(tape.leaf(x), tape.leaf(W), tape.leaf(Tensor({F})), s, pad).value();
    const Tensor cy = conv2d(tape.leaf(y), tape.leaf(W), tape.leaf(Tensor({C})), params(C, k, s, pad)).value();
    REQUIRE(cy.shape() == x.shape());
    CHECK(std::abs(dot(dx, y) - dot(x, cy)) <= 1e-10);
  }
}

TEST_CASE("maxpool2d and unpooling") {
  Tape tape;
  {
    const PoolOutput p = maxpool2d(tape.leaf(Tensor({1, 2, 2}, {1, 2, 3, 4})));
    CHECK(p.values.value().item() == 4.0);
    CHECK(p.indices.argmax == std::vector<std::size_t>{3});
  }
  {
    const PoolOutput p = maxpool2d(tape.leaf(Tensor({1, 4, 4}, 2.5)));
    CHECK(p.values.value() == Tensor({1, 2, 2}, 2.5));
    CHECK(p.indices.argmax == std::vector<std::size_t>{0, 2, 8, 10});
  }
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = Tensor::uniform({2, 6, 6}, 0, 1, rng);
    const PoolOutput p = maxpool2d(tape.leaf(x));
    CHECK(indices_within_windows(p.indices));
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t oy = 0; oy < 3; ++oy)
        for (std::size_t ox = 0; ox < 3; ++ox) {
          double best = -1;
          std::size_t at = 0;
          for (std::size_t dy = 0; dy < 2; ++dy)
            for (std::size_t dx = 0; dx < 2; ++dx)
              if (x(c, 2 * oy + dy, 2 * ox + dx) > best) {
                best = x(c, 2 * oy + dy, 2 * ox + dx);
                at = (c * 6 + 2 * oy + dy) * 6 + 2 * ox + dx;
              }
          CHECK(p.values.value()(c, oy, ox) == best);
          CHECK(p.indices.argmax[(c * 3 + oy) * 3 + ox] == at);
        }
    const Tensor up = maxunpool2d(p.values, p.indices).value();
    CHECK(std::abs(sum(up) - sum(p.values.value())) <= 1e-12);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const bool is_max = std::find(p.indices.argmax.begin(), p.indices.argmax.end(), i) != p.indices.argmax.end();
      CHECK(up[i] <= x[i]);
      CHECK((up[i] == x[i]) == is_max);
    }
    CHECK(maxunpool2d(tape.leaf(Tensor(p.values.shape())), p.indices).value() == Tensor(x.shape()));
  }
  {
    // Odd extents: the missing row/column acts as -inf.
    const Tensor x({1, 3, 3}, {-5, -6, -7, -8, -9, -1, -2, -3, -4});
    const PoolOutput p = maxpool2d(tape.leaf(x));
    CHECK(p.values.value() == Tensor({1, 2, 2}, {-5, -1, -2, -4}));
    CHECK(indices_within_windows(p.indices));
  }
  {
    PoolIndices bad;
    bad.input_shape = {1, 2, 2};
    bad.output_shape = {1, 1, 1};
    bad.argmax = {9};
    CHECK_THROWS_AS(maxunpool2d(tape.leaf(Tensor({1, 1, 1}, 1.0)), bad), ContractViolation);
  }
}

TEST_CASE("maxpool_time") {
  Tape tape;
  const Var y = maxpool_time(tape.leaf(Tensor({2, 1, 5}, {1, 3, 2, 2, 9, 4, 0, -1, 5, 6})));
  CHECK(y.shape() == Shape{2, 1, 2});
  CHECK(y.value() == Tensor({2, 1, 2}, {3, 2, 4, 5}));
  CHECK(maxpool_time(tape.leaf(Tensor({1, 30}))).shape() == Shape{1, 15});
  CHECK(maxpool_time(tape.leaf(Tensor({1, 15}))).shape() == Shape{1, 7});
}

TEST_CASE("dropout") {
  Rng rng(4);
  Tape tape;
  const Tensor x = Tensor::uniform({100}, -1, 1, rng);
  CHECK(dropout(tape.leaf(x), 0.0, Mode::Train, rng).value() == x);
  CHECK(dropout(tape.leaf(x), 0.7, Mode::Eval, rng).value() == x);
  CHECK_THROWS_AS(dropout(tape.leaf(x), 1.0, Mode::Train, rng), ParameterError);

  const std::size_t n = 100000;
  const Tensor y = dropout(tape.leaf(Tensor({n}, 1.0)), 0.5, Mode::Train, rng).value();
  const double mean = sum(y) / static_cast<double>(n);
  const double sigma = 2.0 * std::sqrt(0.25 / static_cast<double>(n));
  CHECK(std::abs(mean - 1.0) <= 3.0 * sigma);
  for (double v : y.data()) CHECK((v == 0.0 || v == 2.0));
}

TEST_CASE("batchnorm") {
  Rng rng(5);
  Tape tape;
  const std::size_t B = 8, F = 3;
  const Tensor x = Tensor::uniform({B, F}, -3, 5, rng);
  const BatchNormResult r = batchnorm_train(tape.leaf(x), tape.leaf(Tensor({F}, 1.0)), tape.leaf(Tensor({F})));
  for (std::size_t f = 0; f < F; ++f) {
    double m = 0, v = 0;
    for (std::size_t b = 0; b < B; ++b) m += r.y.value()(b, f);
    m /= B;
    for (std::size_t b = 0; b < B; ++b) v += (r.y.value()(b, f) - m) * (r.y.value()(b, f) - m);
    v /= B;
    CHECK(std::abs(m) <= 1e-12);
    CHECK(v == doctest::Approx(1.0).epsilon(1e-4));
    // Undo the normalization with the recorded statistics.
    for (std::size_t b = 0; b < B; ++b)
      CHECK(std::abs(r.y.value()(b, f) * std::sqrt(r.var[f] + kBatchNormEps) + r.mean[f] - x(b, f)) <= 1e-8);
  }

  Tensor constant({4, 2});
  for (std::size_t b = 0; b < 4; ++b) {
    constant(b, 0) = 7.0;
    constant(b, 1) = static_cast<double>(b);
  }
  const BatchNormResult c =
      batchnorm_train(tape.leaf(constant), tape.leaf(Tensor({2}, {2.0, 1.0})), tape.leaf(Tensor({2}, {0.25, 0.0})));
  for (std::size_t b = 0; b < 4; ++b) CHECK(c.y.value()(b, 0) == 0.25);

  CHECK_THROWS_AS(batchnorm_train(tape.leaf(Tensor({1, 3})), tape.leaf(Tensor({3}, 1.0)), tape.leaf(Tensor({3}))),
                  ContractViolation);

  ParameterSet ps;
  BatchNorm bn(ps, "bn", F);
  bn.forward(tape, tape.leaf(x), Mode::Train);
  for (std::size_t f = 0; f < F; ++f) CHECK(bn.running_mean()[f] == doctest::Approx(0.1 * r.mean[f]));
  const Var e = bn.forward(tape, tape.leaf(Tensor({1, F}, 0.0)), Mode::Eval);
  CHECK(e.shape() == Shape{1, F});
}

TEST_CASE("softmax") {
  Tape tape;
  const Tensor eq = softmax(tape.leaf(Tensor({3}, {2, 2, 2}))).value();
  for (double v : eq.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor z = Tensor::uniform({4, 6}, -5, 5, rng);
    Tensor shifted = z;
    for (double& v : shifted.data()) v += 1000.0;
    const Tensor p = softmax(tape.leaf(z)).value();
    CHECK(max_abs_diff(p, softmax(tape.leaf(shifted)).value()) <= 1e-12);
    for (std::size_t r = 0; r < 4; ++r) {
      double zsum = 0, psum = 0;
      for (std::size_t k = 0; k < 6; ++k) zsum += std::exp(z(r, k));
      for (std::size_t k = 0; k < 6; ++k) {
        CHECK(std::abs(p(r, k) - std::exp(z(r, k)) / zsum) <= 1e-12);
        CHECK(p(r, k) >= 0.0);
        psum += p(r, k);
      }
      CHECK(std::abs(psum - 1.0) <= 1e-12);
    }
  }
  const Tensor pc = softmax_channels(tape.leaf(Tensor::uniform({3, 2, 2}, -2, 2, rng))).value();
  for (std::size_t p = 0; p < 4; ++p) CHECK(std::abs(pc[p] + pc[4 + p] + pc[8 + p] - 1.0) <= 1e-12);
}
