// Copyright 2026 The affkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "affkit/geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "affkit/error.hpp"

namespace affkit::det {

double iou(const BoundingBox& a, const BoundingBox& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  const double inter = (iw > 0 && ih > 0) ? iw * ih : 0.0;
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

std::vector<std::size_t> nms_indices(std::span<const Detection> dets, double iou_threshold) {
  if (!(iou_threshold > 0.0 && iou_threshold < 1.0)) throw ParameterError("nms: threshold must be in (0, 1)");
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
  std::vector<std::size_t> kept;
  for (std::size_t i : order) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(),
                                        [&](std::size_t k) { return iou(dets[i].box, dets[k].box) >= iou_threshold; });
    if (!suppressed) kept.push_back(i);
  }
  return kept;
}

std::vector<Detection> nms(std::span<const Detection> dets, double iou_threshold) {
  std::vector<Detection> out;
  for (std::size_t i : nms_indices(dets, iou_threshold)) out.push_back(dets[i]);
  return out;
}

std::vector<Detection> select_detections(std::span<const Detection> dets, double threshold) {
  std::vector<Detection> kept;
  for (const Detection& d : dets)
    if (d.score > threshold) kept.push_back(d);
  if (kept.empty() && !dets.empty()) {
    auto best = std::max_element(dets.begin(), dets.end(),
                                 [](const Detection& a, const Detection& b) { return a.score < b.score; });
    kept.push_back(*best);
  }
  std::stable_sort(kept.begin(), kept.end(), [](const Detection& a, const Detection& b) { return a.score > b.score; });
  return kept;
}

std::vector<BoundingBox> generate_anchors(const AnchorConfig& config, std::size_t feature_h, std::size_t feature_w) {
  if (config.scales.empty() || config.ratios.empty()) throw ParameterError("generate_anchors: empty scales or ratios");
  std::vector<BoundingBox> anchors;
  anchors.reserve(feature_h * feature_w * config.scales.size() * config.ratios.size());
  for (std::size_t y = 0; y < feature_h; ++y)
    for (std::size_t x = 0; x < feature_w; ++x) {
      const double cx = (static_cast<double>(x) + 0.5) * config.stride;
      const double cy = (static_cast<double>(y) + 0.5) * config.stride;
      for (double ratio : config.ratios)
        for (double scale : config.scales) {
          const double w = scale / std::sqrt(ratio);
          const double h = scale * std::sqrt(ratio);
          anchors.push_back({cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h});
        }
    }
  return anchors;
}

BoxOffset encode_offset(const BoundingBox& box, const BoundingBox& anchor) {
  if (anchor.width() <= 0 || anchor.height() <= 0) throw ContractViolation("encode_offset: anchor has no area");
  if (box.width() <= 0 || box.height() <= 0) throw ContractViolation("encode_offset: box has no area");
  return {(box.center_x() - anchor.center_x()) / anchor.width(), (box.center_y() - anchor.center_y()) / anchor.height(),
          std::log(box.width() / anchor.width()), std::log(box.height() / anchor.height())};
}

BoundingBox decode_offset(const BoxOffset& t, const BoundingBox& anchor) {
  if (anchor.width() <= 0 || anchor.height() <= 0) throw ContractViolation("decode_offset: anchor has no area");
  const double cx = anchor.center_x() + t.tx * anchor.width();
  const double cy = anchor.center_y() + t.ty * anchor.height();
  const double w = anchor.width() * std::exp(t.tw);
  const double h = anchor.height() * std::exp(t.th);
  return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

namespace {

/// Bilinear footprint of one sample: up to four taps.
struct Sample {
  std::array<std::size_t, 4> offset{};
  std::array<double, 4> weight{};
};

Sample bilinear_taps(double y, double x, std::size_t H, std::size_t W) {
  Sample s;
  if (y < -1.0 || y > static_cast<double>(H) || x < -1.0 || x > static_cast<double>(W)) return s;
  y = std::clamp(y, 0.0, static_cast<double>(H - 1));
  x = std::clamp(x, 0.0, static_cast<double>(W - 1));
  const auto y0 = static_cast<std::size_t>(std::floor(y));
  const auto x0 = static_cast<std::size_t>(std::floor(x));
  const std::size_t y1 = std::min(y0 + 1, H - 1);
  const std::size_t x1 = std::min(x0 + 1, W - 1);
  const double ly = y - static_cast<double>(y0), lx = x - static_cast<double>(x0);
  s.offset = {y0 * W + x0, y0 * W + x1, y1 * W + x0, y1 * W + x1};
  s.weight = {(1 - ly) * (1 - lx), (1 - ly) * lx, ly * (1 - lx), ly * lx};
  return s;
}

}  // namespace

Var roi_align(Var features, const BoundingBox& roi, const RoiAlignConfig& config) {
  if (features.value().rank() != 3) throw DimensionError("roi_align: feature map must be [C x H x W]");
  if (config.out_h == 0 || config.out_w == 0 || config.samples == 0 || !(config.spatial_scale > 0))
    throw ParameterError("roi_align: invalid configuration");
  const std::size_t C = features.shape()[0], H = features.shape()[1], W = features.shape()[2];
  const double fx1 = roi.x1 * config.spatial_scale, fy1 = roi.y1 * config.spatial_scale;
  const double fx2 = roi.x2 * config.spatial_scale, fy2 = roi.y2 * config.spatial_scale;
  if (!roi.valid() || fx2 <= 0.0 || fy2 <= 0.0 || fx1 >= static_cast<double>(W) || fy1 >= static_cast<double>(H))
    throw ContractViolation("roi_align: RoI does not intersect the feature map");
  const double bin_h = (fy2 - fy1) / static_cast<double>(config.out_h);
  const double bin_w = (fx2 - fx1) / static_cast<double>(config.out_w);
  const std::size_t S = config.samples;

  // Sample footprints are shared across channels.
  std::vector<Sample> samples;
  samples.reserve(config.out_h * config.out_w * S * S);
  for (std::size_t by = 0; by < config.out_h; ++by)
    for (std::size_t bx = 0; bx < config.out_w; ++bx)
      for (std::size_t sy = 0; sy < S; ++sy)
        for (std::size_t sx = 0; sx < S; ++sx) {
          const double y = fy1 + bin_h * (static_cast<double>(by) + (static_cast<double>(sy) + 0.5) / static_cast<double>(S));
          const double x = fx1 + bin_w * (static_cast<double>(bx) + (static_cast<double>(sx) + 0.5) / static_cast<double>(S));
          samples.push_back(bilinear_taps(y, x, H, W));
        }

  const std::size_t bins = config.out_h * config.out_w;
  const Tensor& fv = features.value();
  Tensor out({C, config.out_h, config.out_w});
  std::vector<std::size_t> winner(C * bins);
  for (std::size_t c = 0; c < C; ++c) {
    const double* plane = fv.data().data() + c * H * W;
    for (std::size_t b = 0; b < bins; ++b) {
      double best = 0.0;
      std::size_t best_s = b * S * S;
      for (std::size_t k = 0; k < S * S; ++k) {
        const Sample& s = samples[b * S * S + k];
        double v = 0.0;
        for (int t = 0; t < 4; ++t) v += s.weight[t] * plane[s.offset[t]];
        if (k == 0 || v > best) {
          best = v;
          best_s = b * S * S + k;
        }
      }
      out[c * bins + b] = best;
      winner[c * bins + b] = best_s;
    }
  }

  const std::size_t iF = features.id();
  const std::size_t plane_size = H * W;
  return features.tape().record(
      std::move(out), [iF, bins, plane_size, samples = std::move(samples), winner = std::move(winner)](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        Tensor& gf = t.grad_mut(iF);
        for (std::size_t o = 0; o < g.size(); ++o) {
          const std::size_t c = o / bins;
          const Sample& s = samples[winner[o]];
          for (int k = 0; k < 4; ++k) gf[c * plane_size + s.offset[k]] += g[o] * s.weight[k];
        }
      });
}

}  // namespace affkit::det
