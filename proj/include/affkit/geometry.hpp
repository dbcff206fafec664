// Copyright 2026 The affkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "affkit/autodiff.hpp"

namespace affkit::det {

/// Axis-aligned box in continuous pixel coordinates, origin top-left.
struct BoundingBox {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  double center_x() const { return 0.5 * (x1 + x2); }
  double center_y() const { return 0.5 * (y1 + y2); }
  bool valid() const { return x1 <= x2 && y1 <= y2; }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

/// Scale-invariant centre shift and log-space size shift relative to an anchor.
struct BoxOffset {
  double tx = 0, ty = 0, tw = 0, th = 0;
};

struct Detection {
  BoundingBox box;
  int class_id = 1;
  double score = 0.0;
};

/// Intersection over union; 0 when the union has zero area.
double iou(const BoundingBox& a, const BoundingBox& b);

/// Greedy NMS. Indices into `dets` of the kept boxes, highest score first.
/// Equal scores are ordered by lower input index.
std::vector<std::size_t> nms_indices(std::span<const Detection> dets, double iou_threshold);
std::vector<Detection> nms(std::span<const Detection> dets, double iou_threshold);

/// Keeps detections scoring above `threshold` (default 0.9); when none
/// qualify, keeps only the highest-scoring one.
std::vector<Detection> select_detections(std::span<const Detection> dets, double threshold = 0.9);

struct AnchorConfig {
  std::vector<double> scales{32, 64, 128, 256, 512};
  std::vector<double> ratios{0.5, 1.0, 2.0};  ///< height / width
  double stride = 16;
};

/// scales x ratios anchors per feature cell, centred on the cell centre.
/// Order: cells row-major, then ratio, then scale.
std::vector<BoundingBox> generate_anchors(const AnchorConfig& config, std::size_t feature_h, std::size_t feature_w);

BoxOffset encode_offset(const BoundingBox& box, const BoundingBox& anchor);
BoundingBox decode_offset(const BoxOffset& offset, const BoundingBox& anchor);

struct RoiAlignConfig {
  std::size_t out_h = 7;
  std::size_t out_w = 7;
  /// Image-to-feature coordinate factor, 1 / backbone stride.
  double spatial_scale = 1.0 / 16.0;
  /// Samples per bin along each axis (2 -> four samples per bin).
  std::size_t samples = 2;
};

/// RoIAlign with max aggregation. Feature map [C x H x W]; the RoI is in image
/// coordinates and is scaled without any rounding. Samples sit at the bin
/// quarter points; each is bilinearly interpolated (value at integer
/// coordinate (y, x) is feature(c, y, x)).
Var roi_align(Var features, const BoundingBox& roi, const RoiAlignConfig& config = {});

}  // namespace affkit::det
