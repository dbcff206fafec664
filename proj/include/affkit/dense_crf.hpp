// Copyright 2026 The affkit Authors
// SPDX-License-Identifier: Apache-2.0

// Fully connected CRF with Potts compatibility and the two-kernel pairwise
// term
//
//   k(p, q) = w1 exp(-|p_p - p_q|^2 / 2 sa^2 - |I_p - I_q|^2 / 2 sb^2)
//           + w2 exp(-|p_p - p_q|^2 / 2 sg^2)
//
// Messages are computed by exact dense summation over all pixel pairs, so
// images are capped at kMaxPixels.

#pragma once

#include <array>
#include <cstddef>

#include "affkit/image.hpp"
#include "affkit/label_grid.hpp"
#include "affkit/tensor.hpp"

namespace affkit::crf {

inline constexpr std::size_t kMaxPixels = 64 * 64;

struct CRFConfig {
  double w1 = 1.0;
  double w2 = 1.0;
  double sigma_alpha = 30.0;  ///< appearance kernel, position bandwidth (px)
  double sigma_beta = 13.0;   ///< appearance kernel, colour bandwidth
  double sigma_gamma = 3.0;   ///< smoothness kernel bandwidth (px)
  std::size_t iterations = 5;

  /// Throws ParameterError on non-positive bandwidths or zero iterations.
  void validate() const;
};

struct PixelFeature {
  double x = 0;
  double y = 0;
  std::array<double, 3> color{};
};

PixelFeature pixel_feature(const RgbImage& image, std::size_t y, std::size_t x);

double bilateral_kernel(const PixelFeature& p, const PixelFeature& q, const CRFConfig& cfg);

/// Unary costs -log max(p, eps) from per-pixel probabilities [H x W x L].
Tensor unary_from_probabilities(const Tensor& probs);

/// [C x H x W] -> [H x W x C].
Tensor channels_last(const Tensor& maps);

/// Sum of unary costs plus Potts-weighted kernel over all unordered pixel pairs.
/// Unary is [H x W x L].
double crf_energy(const LabelGrid& labeling, const Tensor& unary, const RgbImage& image, const CRFConfig& cfg);

/// Per-pixel softmax of the negated unary.
Tensor mean_field_init(const Tensor& unary);

/// One update: dense message passing, Potts compatibility transform, add
/// unary, per-pixel softmax.
Tensor mean_field_step(const Tensor& q, const Tensor& unary, const RgbImage& image, const CRFConfig& cfg);

/// Marginals [H x W x L] after cfg.iterations updates.
Tensor mean_field(const Tensor& unary, const RgbImage& image, const CRFConfig& cfg);

/// Per-pixel argmax, ties to the lowest label.
LabelGrid map_labeling(const Tensor& q);

}  // namespace affkit::crf
