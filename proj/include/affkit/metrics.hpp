// Copyright 2026 The affkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "affkit/label_grid.hpp"

namespace affkit::metrics {

using Tokens = std::vector<std::string>;

/// Whitespace split, lowercased.
Tokens tokenize(const std::string& text);

struct FBetaOptions {
  double beta = 1.0;
  bool weighted = false;
  /// Bandwidth (pixels) of the proximity weighting, weighted mode only.
  double sigma = 5.0;
};

/// Weighted F-measure for one class:
///   (1 + b^2) P R / (b^2 P + R).
/// Unweighted: plain pixel precision/recall of `class_id`. Weighted: a false
/// positive at distance d from the nearest ground-truth pixel of the class
/// costs 2 - exp(-d^2 / 2 sigma^2), so errors hugging the true region cost
/// about 1 and distant ones approach 2. Returns 0 when P and R are both 0.
double f_beta_w(const LabelGrid& pred, const LabelGrid& gt, int class_id, const FBetaOptions& options = {});

/// Cumulative BLEU-1..BLEU-max_n (max_n <= 4; unused slots are 0) with clipped
/// n-gram precision and brevity penalty. The reference length is the one
/// closest to the candidate (shorter wins ties). Orders longer than the
/// candidate have no n-grams and are left out of the geometric mean, so
/// BLEU-n of a candidate with c < n tokens equals BLEU-c.
std::array<double, 4> bleu(const Tokens& candidate, std::span<const Tokens> references, std::size_t max_n = 4);

/// Longest common subsequence length.
std::size_t lcs_length(const Tokens& a, const Tokens& b);

/// LCS-based F-measure with beta = 1.2.
double rouge_l(const Tokens& candidate, const Tokens& reference, double beta = 1.2);

/// 100 * exact matches / total.
double action_success_rate(std::span<const std::string> predicted, std::span<const std::string> truth);

/// Named metric values, printed as key=value lines or JSON.
class MetricReport {
 public:
  void set(const std::string& name, double value) { values_[name] = value; }
  double get(const std::string& name) const;
  bool contains(const std::string& name) const { return values_.count(name) > 0; }
  const std::map<std::string, double>& values() const { return values_; }

  std::string to_text() const;
  std::string to_json() const;

 private:
  std::map<std::string, double> values_;
};

}  // namespace affkit::metrics
