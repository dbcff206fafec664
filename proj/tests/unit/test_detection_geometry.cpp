// Copyright 2026 The affkit Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "affkit/error.hpp"
#include "affkit/geometry.hpp"
#include "affkit/gradcheck.hpp"
#include "affkit/rng.hpp"

using namespace affkit;
using namespace affkit::det;

namespace {

BoundingBox random_box(Rng& rng, double extent = 50.0) {
  const double x = rng.uniform(0, extent), y = rng.uniform(0, extent);
  return {x, y, x + rng.uniform(1, extent / 2), y + rng.uniform(1, extent / 2)};
}

BoundingBox random_int_box(Rng& rng) {
  const double x = static_cast<double>(rng.below(20)), y = static_cast<double>(rng.below(20));
  return {x, y, x + 1 + static_cast<double>(rng.below(10)), y + 1 + static_cast<double>(rng.below(10))};
}

double pixel_iou(const BoundingBox& a, const BoundingBox& b) {
  int inter = 0, uni = 0;
  for (int y = 0; y < 40; ++y)
    for (int x = 0; x < 40; ++x) {
      const bool ia = x >= a.x1 && x < a.x2 && y >= a.y1 && y < a.y2;
      const bool ib = x >= b.x1 && x < b.x2 && y >= b.y1 && y < b.y2;
      inter += ia && ib;
      uni += ia || ib;
    }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / uni;
}

std::vector<std::size_t> greedy_oracle(const std::vector<Detection>& dets, double thr) {
  std::vector<bool> alive(dets.size(), true);
  std::vector<std::size_t> kept;
  for (;;) {
    std::size_t best = dets.size();
    for (std::size_t i = 0; i < dets.size(); ++i)
      if (alive[i] && (best == dets.size() || dets[i].score > dets[best].score)) best = i;
    if (best == dets.size()) return kept;
    kept.push_back(best);
    for (std::size_t i = 0; i < dets.size(); ++i)
      if (alive[i] && iou(dets[i].box, dets[best].box) >= thr) alive[i] = false;
  }
}

double bilinear(const Tensor& f, std::size_t c, double y, double x) {
  const std::size_t y0 = static_cast<std::size_t>(y), x0 = static_cast<std::size_t>(x);
  const double dy = y - static_cast<double>(y0), dx = x - static_cast<double>(x0);
  return f(c, y0, x0) * (1 - dy) * (1 - dx) + f(c, y0, x0 + 1) * (1 - dy) * dx + f(c, y0 + 1, x0) * dy * (1 - dx) +
         f(c, y0 + 1, x0 + 1) * dy * dx;
}

}  // namespace

TEST_CASE("iou") {
  const BoundingBox a{0, 0, 10, 10};
  CHECK(iou(a, a) == 1.0);
  CHECK(iou(a, {20, 20, 30, 30}) == 0.0);
  CHECK(iou(a, {10, 0, 20, 10}) == 0.0);
  CHECK(iou(a, {5, 0, 15, 10}) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(iou({3, 3, 3, 3}, {3, 3, 3, 3}) == 0.0);
  Rng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const BoundingBox p = random_int_box(rng), q = random_int_box(rng);
    CHECK(iou(p, q) == iou(q, p));
    CHECK(std::abs(iou(p, q) - pixel_iou(p, q)) <= 1e-12);
    const BoundingBox r = random_box(rng);
    CHECK(iou(r, r) == doctest::Approx(1.0));
  }
}

TEST_CASE("nms") {
  const std::vector<Detection> one{{{0, 0, 5, 5}, 1, 0.3}};
  CHECK(nms(one, 0.5).size() == 1);
  const std::vector<Detection> twins{{{0, 0, 10, 10}, 1, 0.8}, {{0, 0, 10, 10}, 2, 0.9}};
  const auto kept = nms(twins, 0.5);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].score == 0.9);
  CHECK(nms_indices(std::vector<Detection>{{{0, 0, 4, 4}, 1, 0.5}, {{10, 10, 14, 14}, 1, 0.5}}, 0.5) ==
        std::vector<std::size_t>{0, 1});

  Rng rng(22);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Detection> dets;
    for (int i = 0; i < 20; ++i) dets.push_back({random_box(rng, 30), 1, rng.uniform()});
    const double thr = rng.uniform(0.2, 0.8);
    const auto idx = nms_indices(dets, thr);
    CHECK(idx == greedy_oracle(dets, thr));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (i > 0) CHECK(dets[idx[i - 1]].score >= dets[idx[i]].score);
      for (std::size_t j = i + 1; j < idx.size(); ++j) CHECK(iou(dets[idx[i]].box, dets[idx[j]].box) < thr);
    }
    std::vector<Detection> shuffled = dets;
    shuffle(shuffled, rng);
    const auto a = nms(dets, thr), b = nms(shuffled, thr);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].box == b[i].box);
  }
}

TEST_CASE("select_detections") {
  const std::vector<Detection> dets{{{0, 0, 1, 1}, 1, 0.95}, {{0, 0, 2, 2}, 2, 0.5}, {{0, 0, 3, 3}, 3, 0.92}};
  const auto high = select_detections(dets);
  CHECK(high.size() == 2);
  const std::vector<Detection> low{{{0, 0, 1, 1}, 1, 0.4}, {{0, 0, 2, 2}, 2, 0.7}};
  const auto fallback = select_detections(low);
  REQUIRE(fallback.size() == 1);
  CHECK(fallback[0].class_id == 2);
  CHECK(select_detections(std::vector<Detection>{}).empty());
}

TEST_CASE("anchors") {
  const AnchorConfig cfg;
  const auto single = generate_anchors(cfg, 1, 1);
  CHECK(single.size() == 15);
  for (const BoundingBox& b : single) {
    CHECK(b.center_x() == doctest::Approx(8.0));
    CHECK(b.center_y() == doctest::Approx(8.0));
  }
  // Order: ratio, then scale. Ratio 1 is the middle block.
  for (std::size_t s = 0; s < 5; ++s) {
    const BoundingBox& sq = single[5 + s];
    CHECK(sq.width() == doctest::Approx(sq.height()));
    CHECK(sq.area() == doctest::Approx(cfg.scales[s] * cfg.scales[s]));
    for (std::size_t r = 0; r < 3; ++r) {
      const BoundingBox& b = single[r * 5 + s];
      CHECK(b.area() == doctest::Approx(cfg.scales[s] * cfg.scales[s]));
      CHECK(b.height() / b.width() == doctest::Approx(cfg.ratios[r]));
      if (s > 0) CHECK(b.area() / single[r * 5 + s - 1].area() == doctest::Approx(4.0));
    }
  }
  const auto grid = generate_anchors(cfg, 2, 3);
  CHECK(grid.size() == 2 * 3 * 15);
  CHECK(grid[15 * 4].center_x() == doctest::Approx(24.0));
  CHECK(grid[15 * 4].center_y() == doctest::Approx(24.0));
}

TEST_CASE("box offsets") {
  const BoundingBox anchor{0, 0, 10, 10};
  const BoxOffset zero = encode_offset(anchor, anchor);
  CHECK(zero.tx == 0.0);
  CHECK(zero.ty == 0.0);
  CHECK(zero.tw == 0.0);
  CHECK(zero.th == 0.0);
  const BoxOffset t = encode_offset({5, 5, 25, 25}, anchor);
  CHECK(t.tx == doctest::Approx(1.0));
  CHECK(t.ty == doctest::Approx(1.0));
  CHECK(t.tw == doctest::Approx(std::log(2.0)));
  CHECK(t.th == doctest::Approx(std::log(2.0)));
  CHECK_THROWS_AS(encode_offset({1, 1, 1, 4}, anchor), ContractViolation);
  CHECK_THROWS_AS(decode_offset({}, {0, 0, 0, 1}), ContractViolation);

  Rng rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    const BoundingBox b = random_box(rng), a = random_box(rng);
    const BoundingBox back = decode_offset(encode_offset(b, a), a);
    CHECK(std::abs(back.x1 - b.x1) <= 1e-10);
    CHECK(std::abs(back.y1 - b.y1) <= 1e-10);
    CHECK(std::abs(back.x2 - b.x2) <= 1e-10);
    CHECK(std::abs(back.y2 - b.y2) <= 1e-10);
  }
}

TEST_CASE("roi_align") {
  Tape tape;
  RoiAlignConfig unit;
  unit.spatial_scale = 1.0;

  const Var flat = roi_align(tape.leaf(Tensor({2, 9, 9}, 0.7)), {1.3, 2.1, 6.8, 7.4}, unit);
  CHECK(flat.shape() == Shape{2, 7, 7});
  for (double v : flat.value().data()) CHECK(v == doctest::Approx(0.7).epsilon(1e-15));

  Tensor ramp({1, 10, 12});
  for (std::size_t y = 0; y < 10; ++y)
    for (std::size_t x = 0; x < 12; ++x) ramp(0, y, x) = static_cast<double>(x);
  const BoundingBox roi{1.5, 2.25, 8.5, 7.0};
  const Tensor r = roi_align(tape.leaf(ramp), roi, unit).value();
  const double bin_w = (roi.x2 - roi.x1) / 7.0;
  for (std::size_t by = 0; by < 7; ++by)
    for (std::size_t bx = 0; bx < 7; ++bx)
      CHECK(std::abs(r(0, by, bx) - (roi.x1 + bin_w * (static_cast<double>(bx) + 0.75))) <= 1e-12);

  Rng rng(24);
  for (int trial = 0; trial < 30; ++trial) {
    const Tensor f = Tensor::uniform({3, 12, 14}, -1, 1, rng);
    RoiAlignConfig cfg;
    cfg.spatial_scale = 0.5;
    cfg.out_h = 1 + rng.below(7);
    cfg.out_w = 1 + rng.below(7);
    const double x1 = rng.uniform(0, 12), y1 = rng.uniform(0, 10);
    const BoundingBox box{x1, y1, rng.uniform(x1 + 1, 26), rng.uniform(y1 + 1, 22)};
    const Tensor got = roi_align(tape.leaf(f), box, cfg).value();
    const double fx1 = box.x1 * 0.5, fy1 = box.y1 * 0.5;
    const double bw = (box.x2 - box.x1) * 0.5 / static_cast<double>(cfg.out_w);
    const double bh = (box.y2 - box.y1) * 0.5 / static_cast<double>(cfg.out_h);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t by = 0; by < cfg.out_h; ++by)
        for (std::size_t bx = 0; bx < cfg.out_w; ++bx) {
          const double ys[2] = {fy1 + bh * (by + 0.25), fy1 + bh * (by + 0.75)};
          const double xs[2] = {fx1 + bw * (bx + 0.25), fx1 + bw * (bx + 0.75)};
          double best = -1e300;
          for (double y : ys)
            for (double x : xs) best = std::max(best, bilinear(f, c, y, x));
          CHECK(std::abs(got[(c * cfg.out_h + by) * cfg.out_w + bx] - best) <= 1e-9);
        }

    // Shift content and RoI by an integer offset.
    Tensor shifted({3, 12, 14});
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y + 1 < 12; ++y)
        for (std::size_t x = 0; x + 2 < 14; ++x) shifted(c, y + 1, x + 2) = f(c, y, x);
    RoiAlignConfig one;
    one.spatial_scale = 1.0;
    const double sx = rng.uniform(0, 6), sy = rng.uniform(0, 5);
    const BoundingBox inner{sx, sy, sx + rng.uniform(1, 4), sy + rng.uniform(1, 4)};
    const Tensor before = roi_align(tape.leaf(f), inner, one).value();
    const Tensor after = roi_align(tape.leaf(shifted), {inner.x1 + 2, inner.y1 + 1, inner.x2 + 2, inner.y2 + 1}, one).value();
    CHECK(max_abs_diff(before, after) <= 1e-9);
  }

  CHECK_THROWS_AS(roi_align(tape.leaf(Tensor({1, 4, 4})), {100, 100, 120, 120}, unit), ContractViolation);
  CHECK_THROWS_AS(roi_align(tape.leaf(Tensor({4, 4})), {0, 0, 2, 2}, unit), DimensionError);

  const Tensor probe = Tensor::uniform({2, 7, 7}, -1, 1, rng);
  const auto g = gradcheck_inputs(
      "roi_align",
      [&](Tape& t, const std::vector<Var>& in) {
        return sum(roi_align(in[0], {3.3, 2.7, 40.1, 51.9}, RoiAlignConfig{}) * t.leaf(probe));
      },
      {Tensor::uniform({2, 5, 5}, -1, 1, rng)});
  CHECK(g.max_rel_error < kGradcheckTolerance);
}
