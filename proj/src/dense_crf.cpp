// Copyright 2026 The affkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "affkit/dense_crf.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "affkit/error.hpp"
#include "affkit/loss_constants.hpp"
#include "affkit/parallel.hpp"

namespace affkit::crf {

void CRFConfig::validate() const {
  if (!(sigma_alpha > 0 && sigma_beta > 0 && sigma_gamma > 0))
    throw ParameterError("CRF kernel bandwidths must be positive");
  if (iterations < 1) throw ParameterError("CRF needs at least one mean-field iteration");
}

PixelFeature pixel_feature(const RgbImage& image, std::size_t y, std::size_t x) {
  return {static_cast<double>(x), static_cast<double>(y),
          {static_cast<double>(image.at(y, x, 0)), static_cast<double>(image.at(y, x, 1)),
           static_cast<double>(image.at(y, x, 2))}};
}

double bilateral_kernel(const PixelFeature& p, const PixelFeature& q, const CRFConfig& cfg) {
  const double dpos = (p.x - q.x) * (p.x - q.x) + (p.y - q.y) * (p.y - q.y);
  double dcol = 0.0;
  for (std::size_t c = 0; c < 3; ++c) dcol += (p.color[c] - q.color[c]) * (p.color[c] - q.color[c]);
  const double appearance = std::exp(-dpos / (2 * cfg.sigma_alpha * cfg.sigma_alpha) - dcol / (2 * cfg.sigma_beta * cfg.sigma_beta));
  const double smoothness = std::exp(-dpos / (2 * cfg.sigma_gamma * cfg.sigma_gamma));
  return cfg.w1 * appearance + cfg.w2 * smoothness;
}

Tensor unary_from_probabilities(const Tensor& probs) {
  Tensor u(probs.shape());
  for (std::size_t i = 0; i < probs.size(); ++i) u[i] = -std::log(std::max(probs[i], kLogFloor));
  return u;
}

Tensor channels_last(const Tensor& maps) {
  if (maps.rank() != 3) throw DimensionError("channels_last: expected [C x H x W]");
  const std::size_t C = maps.dim(0), H = maps.dim(1), W = maps.dim(2);
  Tensor out({H, W, C});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) out(y, x, c) = maps(c, y, x);
  return out;
}

namespace {

void check_inputs(const Tensor& unary, const RgbImage& image) {
  if (unary.rank() != 3 || unary.dim(0) != image.height || unary.dim(1) != image.width)
    throw DimensionError("dense CRF: unary " + to_string(unary.shape()) + " does not match image " +
                         std::to_string(image.height) + "x" + std::to_string(image.width));
  if (image.height * image.width > kMaxPixels)
    throw DimensionError("dense CRF: image exceeds the " + std::to_string(kMaxPixels) + "-pixel cap");
}

std::vector<PixelFeature> all_features(const RgbImage& image) {
  std::vector<PixelFeature> f;
  f.reserve(image.height * image.width);
  for (std::size_t y = 0; y < image.height; ++y)
    for (std::size_t x = 0; x < image.width; ++x) f.push_back(pixel_feature(image, y, x));
  return f;
}

void softmax_row(const double* logits, double* out, std::size_t L) {
  const double mx = *std::max_element(logits, logits + L);
  double z = 0.0;
  for (std::size_t l = 0; l < L; ++l) z += (out[l] = std::exp(logits[l] - mx));
  for (std::size_t l = 0; l < L; ++l) out[l] /= z;
}

}  // namespace

double crf_energy(const LabelGrid& labeling, const Tensor& unary, const RgbImage& image, const CRFConfig& cfg) {
  check_inputs(unary, image);
  if (labeling.height != image.height || labeling.width != image.width)
    throw DimensionError("crf_energy: labeling size does not match image");
  const std::size_t L = unary.dim(2);
  const std::size_t n = labeling.size();
  double energy = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    const int l = labeling.labels[p];
    if (l < 0 || static_cast<std::size_t>(l) >= L) throw ContractViolation("crf_energy: label outside unary range");
    energy += unary[p * L + static_cast<std::size_t>(l)];
  }
  const std::vector<PixelFeature> f = all_features(image);
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t q = p + 1; q < n; ++q)
      if (labeling.labels[p] != labeling.labels[q]) energy += bilateral_kernel(f[p], f[q], cfg);
  return energy;
}

Tensor mean_field_init(const Tensor& unary) {
  if (unary.rank() != 3) throw DimensionError("mean_field: unary must be [H x W x L]");
  const std::size_t L = unary.dim(2);
  Tensor q(unary.shape());
  std::vector<double> neg(L);
  for (std::size_t p = 0; p < unary.size() / L; ++p) {
    for (std::size_t l = 0; l < L; ++l) neg[l] = -unary[p * L + l];
    softmax_row(neg.data(), q.data().data() + p * L, L);
  }
  return q;
}

Tensor mean_field_step(const Tensor& q, const Tensor& unary, const RgbImage& image, const CRFConfig& cfg) {
  check_inputs(unary, image);
  require_same_shape(q, unary, "mean_field_step");
  cfg.validate();
  const std::size_t L = unary.dim(2);
  const std::size_t n = image.height * image.width;
  const std::vector<PixelFeature> f = all_features(image);
  Tensor next(q.shape());
  const bool no_messages = cfg.w1 == 0.0 && cfg.w2 == 0.0;
  parallel_for(n, [&](std::size_t begin, std::size_t end) {
    std::vector<double> message(L), logits(L);
    for (std::size_t i = begin; i < end; ++i) {
      std::fill(message.begin(), message.end(), 0.0);
      if (!no_messages) {
        for (std::size_t j = 0; j < n; ++j) {
          if (j == i) continue;
          const double k = bilateral_kernel(f[i], f[j], cfg);
          for (std::size_t l = 0; l < L; ++l) message[l] += k * q[j * L + l];
        }
      }
      double total = 0.0;
      for (double m : message) total += m;
      // Potts: the penalty for label l collects the messages of every other label.
      for (std::size_t l = 0; l < L; ++l) logits[l] = -unary[i * L + l] - (total - message[l]);
      softmax_row(logits.data(), next.data().data() + i * L, L);
    }
  });
  return next;
}

Tensor mean_field(const Tensor& unary, const RgbImage& image, const CRFConfig& cfg) {
  check_inputs(unary, image);
  cfg.validate();
  Tensor q = mean_field_init(unary);
  for (std::size_t it = 0; it < cfg.iterations; ++it) q = mean_field_step(q, unary, image, cfg);
  return q;
}

LabelGrid map_labeling(const Tensor& q) {
  if (q.rank() != 3) throw DimensionError("map_labeling: expected [H x W x L]");
  const std::size_t H = q.dim(0), W = q.dim(1), L = q.dim(2);
  LabelGrid out(H, W);
  for (std::size_t p = 0; p < H * W; ++p) {
    std::size_t best = 0;
    for (std::size_t l = 1; l < L; ++l)
      if (q[p * L + l] > q[p * L + best]) best = l;
    out.labels[p] = static_cast<int>(best);
  }
  return out;
}

}  // namespace affkit::crf
