// Copyright 2026 The affkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "affkit/affordance_mask.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "affkit/error.hpp"

namespace affkit::aff {

std::vector<int> unique_labels(const LabelGrid& grid) {
  std::set<int> s(grid.labels.begin(), grid.labels.end());
  return {s.begin(), s.end()};
}

Tensor bilinear_resize(const Tensor& maps, std::size_t out_h, std::size_t out_w) {
  if (maps.rank() != 3) throw DimensionError("bilinear_resize: expected [C x h x w], got " + to_string(maps.shape()));
  if (out_h == 0 || out_w == 0) throw ParameterError("bilinear_resize: empty target size");
  const std::size_t C = maps.dim(0), h = maps.dim(1), w = maps.dim(2);
  Tensor out({C, out_h, out_w});
  auto source = [](std::size_t o, std::size_t in, std::size_t out) {
    const double s = (static_cast<double>(o) + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
    return std::clamp(s, 0.0, static_cast<double>(in - 1));
  };
  for (std::size_t y = 0; y < out_h; ++y) {
    const double sy = source(y, h, out_h);
    const auto y0 = static_cast<std::size_t>(std::floor(sy));
    const std::size_t y1 = std::min(y0 + 1, h - 1);
    const double ly = sy - static_cast<double>(y0);
    for (std::size_t x = 0; x < out_w; ++x) {
      const double sx = source(x, w, out_w);
      const auto x0 = static_cast<std::size_t>(std::floor(sx));
      const std::size_t x1 = std::min(x0 + 1, w - 1);
      const double lx = sx - static_cast<double>(x0);
      for (std::size_t c = 0; c < C; ++c) {
        // Zero-weight taps are skipped so exact grid hits reproduce the source bit-for-bit.
        double v = (1 - ly) * (1 - lx) * maps(c, y0, x0);
        if (lx > 0) v += (1 - ly) * lx * maps(c, y0, x1);
        if (ly > 0) v += ly * (1 - lx) * maps(c, y1, x0);
        if (ly > 0 && lx > 0) v += ly * lx * maps(c, y1, x1);
        out(c, y, x) = v;
      }
    }
  }
  return out;
}

int band_label(double value, std::span<const int> labels, double alpha) {
  const double nearest = std::round(value);
  if (nearest < 0 || nearest >= static_cast<double>(labels.size())) return 0;
  if (std::abs(value - nearest) > alpha) return 0;
  return labels[static_cast<std::size_t>(nearest)];
}

LabelGrid resize_mask_multithreshold(const LabelGrid& src, std::size_t out_h, std::size_t out_w, double alpha) {
  if (src.size() == 0) throw ContractViolation("resize_mask_multithreshold: empty mask");
  if (!(alpha > 0.0 && alpha < 0.5)) throw ParameterError("resize_mask_multithreshold: alpha must be in (0, 0.5)");
  const std::vector<int> labels = unique_labels(src);
  Tensor ranks({1, src.height, src.width});
  for (std::size_t i = 0; i < src.size(); ++i)
    ranks[i] = static_cast<double>(std::lower_bound(labels.begin(), labels.end(), src.labels[i]) - labels.begin());
  const Tensor resized = bilinear_resize(ranks, out_h, out_w);
  LabelGrid out(out_h, out_w);
  for (std::size_t i = 0; i < out.size(); ++i) out.labels[i] = band_label(resized[i], labels, alpha);
  return out;
}

std::size_t AffordancePriority::rank(int label) const {
  auto it = std::find(order.begin(), order.end(), label);
  if (it == order.end()) throw ContractViolation("affordance " + std::to_string(label) + " missing from priority order");
  return static_cast<std::size_t>(it - order.begin());
}

AffordancePriority default_priority(int num_affordances, int contain_id) {
  AffordancePriority p;
  if (contain_id >= 1 && contain_id <= num_affordances) p.order.push_back(contain_id);
  for (int a = 1; a <= num_affordances; ++a)
    if (a != contain_id) p.order.push_back(a);
  return p;
}

MergeResult merge_detections(std::span<const MaskedDetection> masks, const AffordancePriority& priority,
                             std::size_t image_h, std::size_t image_w) {
  MergeResult result{LabelGrid(image_h, image_w), {}};
  for (std::size_t k = 0; k < masks.size(); ++k) {
    const auto& [det, mask] = masks[k];
    const long x0 = static_cast<long>(std::floor(det.box.x1));
    const long y0 = static_cast<long>(std::floor(det.box.y1));
    const long bw = static_cast<long>(std::ceil(det.box.x2)) - x0;
    const long bh = static_cast<long>(std::ceil(det.box.y2)) - y0;
    if (bw != static_cast<long>(mask.width) || bh != static_cast<long>(mask.height))
      throw ContractViolation("merge_detections: mask " + std::to_string(mask.height) + "x" + std::to_string(mask.width) +
                              " not sized to its box " + std::to_string(bh) + "x" + std::to_string(bw));
    bool clipped = false;
    for (std::size_t r = 0; r < mask.height; ++r)
      for (std::size_t c = 0; c < mask.width; ++c) {
        const long y = y0 + static_cast<long>(r), x = x0 + static_cast<long>(c);
        if (y < 0 || x < 0 || y >= static_cast<long>(image_h) || x >= static_cast<long>(image_w)) {
          clipped = true;
          continue;
        }
        const int label = mask.at(r, c);
        if (label == 0) continue;
        int& cur = result.labels.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x));
        if (cur == 0 || priority.rank(label) > priority.rank(cur)) cur = label;
      }
    if (clipped) result.warnings.push_back("detection " + std::to_string(k) + " clipped to image bounds");
  }
  return result;
}

Tensor multi_scale_fuse(std::span<const Tensor> score_maps, std::size_t out_h, std::size_t out_w,
                        std::size_t expected_scales) {
  if (score_maps.size() != expected_scales)
    throw ContractViolation("multi_scale_fuse: expected " + std::to_string(expected_scales) + " scales, got " +
                            std::to_string(score_maps.size()));
  Tensor fused;
  for (std::size_t s = 0; s < score_maps.size(); ++s) {
    const Tensor& m = score_maps[s];
    if (m.rank() != 3 || m.dim(0) != score_maps[0].dim(0))
      throw DimensionError("multi_scale_fuse: class count mismatch " + to_string(m.shape()) + " vs " +
                           to_string(score_maps[0].shape()));
    Tensor r = bilinear_resize(m, out_h, out_w);
    if (s == 0) {
      fused = std::move(r);
      continue;
    }
    for (std::size_t i = 0; i < fused.size(); ++i) fused[i] = std::max(fused[i], r[i]);
  }
  return fused;
}

LabelGrid argmax_labels(const Tensor& maps) {
  if (maps.rank() != 3) throw DimensionError("argmax_labels: expected [C x H x W]");
  const std::size_t C = maps.dim(0), H = maps.dim(1), W = maps.dim(2);
  LabelGrid out(H, W);
  for (std::size_t p = 0; p < H * W; ++p) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < C; ++c)
      if (maps[c * H * W + p] > maps[best * H * W + p]) best = c;
    out.labels[p] = static_cast<int>(best);
  }
  return out;
}

}  // namespace affkit::aff
