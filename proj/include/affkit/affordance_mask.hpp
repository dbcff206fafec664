// Copyright 2026 The affkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "affkit/geometry.hpp"
#include "affkit/label_grid.hpp"
#include "affkit/tensor.hpp"

namespace affkit::aff {

inline constexpr double kDefaultBandAlpha = 0.005;

/// Sorted distinct labels of a grid.
std::vector<int> unique_labels(const LabelGrid& grid);

/// Bilinear resize of every channel of [C x h x w] to [C x H x W], pixel-centre
/// aligned with edge clamping. Same-size resize is the identity.
Tensor bilinear_resize(const Tensor& maps, std::size_t out_h, std::size_t out_w);

/// Quantizes an interpolated rank value: returns labels[p] when
/// |value - p| <= alpha for some rank p, background 0 otherwise.
int band_label(double value, std::span<const int> labels, double alpha);

/// Multi-label mask resize: labels -> ranks 0..n-1, bilinear resize,
/// alpha-band thresholding, ranks -> labels.
LabelGrid resize_mask_multithreshold(const LabelGrid& src, std::size_t out_h, std::size_t out_w,
                                     double alpha = kDefaultBandAlpha);

/// Affordance ids from lowest to highest priority.
struct AffordancePriority {
  std::vector<int> order;

  /// Position in `order`; throws ContractViolation for unknown labels.
  std::size_t rank(int label) const;
};

/// `contain` lowest, remaining ids 1..num_affordances in increasing order.
AffordancePriority default_priority(int num_affordances, int contain_id);

struct MaskedDetection {
  det::Detection detection;
  LabelGrid mask;  ///< sized to the detection box
};

struct MergeResult {
  LabelGrid labels;
  std::vector<std::string> warnings;
};

/// Pastes each mask at floor(box.x1), floor(box.y1). Overlaps resolve to the
/// higher-priority affordance; background never overwrites a label. Parts of
/// a box outside the image are clipped with a warning.
MergeResult merge_detections(std::span<const MaskedDetection> masks, const AffordancePriority& priority,
                             std::size_t image_h, std::size_t image_w);

/// Resizes each [k x h_i x w_i] score map to the target size and takes the
/// per-pixel per-class maximum.
Tensor multi_scale_fuse(std::span<const Tensor> score_maps, std::size_t out_h, std::size_t out_w,
                        std::size_t expected_scales = 3);

/// Per-pixel argmax over the channel axis of [C x H x W]; ties to the lowest id.
LabelGrid argmax_labels(const Tensor& maps);

}  // namespace affkit::aff
