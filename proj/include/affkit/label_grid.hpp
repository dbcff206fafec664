// Copyright 2026 The affkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

namespace affkit {

/// 2-D grid of small non-negative labels; 0 is background.
struct LabelGrid {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<int> labels;

  LabelGrid() = default;
  LabelGrid(std::size_t h, std::size_t w, int fill = 0) : height(h), width(w), labels(h * w, fill) {}

  int& at(std::size_t y, std::size_t x) { return labels[y * width + x]; }
  int at(std::size_t y, std::size_t x) const { return labels[y * width + x]; }
  std::size_t size() const { return labels.size(); }

  friend bool operator==(const LabelGrid&, const LabelGrid&) = default;
};

}  // namespace affkit
