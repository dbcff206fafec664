// Copyright 2026 The affkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "affkit/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "affkit/error.hpp"
#include "json.hpp"

namespace affkit::metrics {

Tokens tokenize(const std::string& text) {
  Tokens out;
  std::istringstream is(text);
  std::string tok;
  while (is >> tok) {
    std::transform(tok.begin(), tok.end(), tok.begin(), [](unsigned char c) { return std::tolower(c); });
    out.push_back(tok);
  }
  return out;
}

namespace {

/// Squared distance from each pixel to the nearest pixel of `mask` (brute force).
std::vector<double> squared_distance_to(const LabelGrid& grid, const std::vector<bool>& mask) {
  std::vector<std::pair<long, long>> points;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) points.emplace_back(static_cast<long>(i / grid.width), static_cast<long>(i % grid.width));
  std::vector<double> d(mask.size(), std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) {
      d[i] = 0.0;
      continue;
    }
    const long y = static_cast<long>(i / grid.width), x = static_cast<long>(i % grid.width);
    for (const auto& [py, px] : points)
      d[i] = std::min(d[i], static_cast<double>((py - y) * (py - y) + (px - x) * (px - x)));
  }
  return d;
}

}  // namespace

double f_beta_w(const LabelGrid& pred, const LabelGrid& gt, int class_id, const FBetaOptions& options) {
  if (pred.height != gt.height || pred.width != gt.width)
    throw DimensionError("f_beta_w: prediction " + std::to_string(pred.height) + "x" + std::to_string(pred.width) +
                         " vs ground truth " + std::to_string(gt.height) + "x" + std::to_string(gt.width));
  if (options.beta <= 0 || options.sigma <= 0) throw ParameterError("f_beta_w: beta and sigma must be positive");
  const std::size_t n = gt.size();
  std::vector<bool> truth(n);
  for (std::size_t i = 0; i < n; ++i) truth[i] = gt.labels[i] == class_id;

  std::vector<double> d2;
  if (options.weighted) d2 = squared_distance_to(gt, truth);

  double tp = 0.0, fp = 0.0, fn = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const bool predicted = pred.labels[i] == class_id;
    if (predicted && truth[i]) tp += 1.0;
    else if (truth[i]) fn += 1.0;
    else if (predicted) {
      const double w = options.weighted && std::isfinite(d2[i])
                           ? 2.0 - std::exp(-d2[i] / (2.0 * options.sigma * options.sigma))
                           : (options.weighted ? 2.0 : 1.0);
      fp += w;
    }
  }
  const double precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  const double recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  if (precision == 0.0 && recall == 0.0) return 0.0;
  const double b2 = options.beta * options.beta;
  return (1 + b2) * precision * recall / (b2 * precision + recall);
}

namespace {

std::map<Tokens, std::size_t> ngram_counts(const Tokens& t, std::size_t n) {
  std::map<Tokens, std::size_t> counts;
  for (std::size_t i = 0; i + n <= t.size(); ++i) ++counts[Tokens(t.begin() + static_cast<long>(i), t.begin() + static_cast<long>(i + n))];
  return counts;
}

}  // namespace

std::array<double, 4> bleu(const Tokens& candidate, std::span<const Tokens> references, std::size_t max_n) {
  std::array<double, 4> scores{};
  if (candidate.empty() || references.empty()) return scores;
  if (max_n == 0 || max_n > 4) throw ParameterError("bleu: max_n must be in [1, 4]");

  const double c = static_cast<double>(candidate.size());
  std::size_t r = references.front().size();
  for (const Tokens& ref : references) {
    const auto dist = [&](std::size_t len) { return std::abs(static_cast<double>(len) - c); };
    if (dist(ref.size()) < dist(r) || (dist(ref.size()) == dist(r) && ref.size() < r)) r = ref.size();
  }
  const double brevity = c < static_cast<double>(r) ? std::exp(1.0 - static_cast<double>(r) / c) : 1.0;

  double log_sum = 0.0;
  std::size_t orders = 0;
  bool zero = false;
  for (std::size_t n = 1; n <= max_n; ++n) {
    if (n > candidate.size()) {
      scores[n - 1] = scores[n - 2];
      continue;
    }
    const auto cand = ngram_counts(candidate, n);
    std::map<Tokens, std::size_t> max_ref;
    for (const Tokens& ref : references)
      for (const auto& [gram, count] : ngram_counts(ref, n)) max_ref[gram] = std::max(max_ref[gram], count);
    std::size_t clipped = 0, total = 0;
    for (const auto& [gram, count] : cand) {
      total += count;
      auto it = max_ref.find(gram);
      clipped += std::min(count, it == max_ref.end() ? std::size_t{0} : it->second);
    }
    if (clipped == 0) zero = true;
    ++orders;
    if (!zero) log_sum += std::log(static_cast<double>(clipped) / static_cast<double>(total));
    scores[n - 1] = zero ? 0.0 : brevity * std::exp(log_sum / static_cast<double>(orders));
  }
  return scores;
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(const Tokens& candidate, const Tokens& reference, double beta) {
  if (candidate.empty() || reference.empty()) return 0.0;
  const double lcs = static_cast<double>(lcs_length(candidate, reference));
  if (lcs == 0.0) return 0.0;
  const double recall = lcs / static_cast<double>(reference.size());
  const double precision = lcs / static_cast<double>(candidate.size());
  const double b2 = beta * beta;
  return (1 + b2) * recall * precision / (recall + b2 * precision);
}

double action_success_rate(std::span<const std::string> predicted, std::span<const std::string> truth) {
  if (predicted.size() != truth.size())
    throw DimensionError("action_success_rate: " + std::to_string(predicted.size()) + " predictions vs " +
                         std::to_string(truth.size()) + " ground-truth verbs");
  if (truth.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  return 100.0 * static_cast<double>(hits) / static_cast<double>(truth.size());
}

double MetricReport::get(const std::string& name) const {
  auto it = values_.find(name);
  if (it == values_.end()) throw ContractViolation("metric '" + name + "' not in report");
  return it->second;
}

std::string MetricReport::to_text() const {
  std::ostringstream os;
  os << std::setprecision(6) << std::fixed;
  for (const auto& [k, v] : values_) os << k << '=' << v << '\n';
  return os.str();
}

std::string MetricReport::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : values_) j[k] = v;
  return j.dump(2);
}

}  // namespace affkit::metrics
