// SPDX-License-Identifier: Apache-2.0

#include "muscle/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "muscle/errors.hpp"
#include "muscle/rng.hpp"

namespace muscle {

namespace {
void check_pairs(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size())
    throw ContractError("metric inputs differ in length: " + std::to_string(scores.size()) + " scores vs " +
                        std::to_string(labels.size()) + " labels");
  if (scores.empty()) throw ContractError("metric inputs are empty");
  for (int l : labels)
    if (l != 0 && l != 1) throw ContractError("labels must be binary");
}
}  // namespace

ClassificationMetrics classification_metrics(std::span<const double> scores, std::span<const int> labels,
                                             double threshold) {
  check_pairs(scores, labels);
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    if (labels[i] == 1)
      (pred ? tp : fn)++;
    else
      (pred ? fp : tn)++;
  }
  ClassificationMetrics m;
  m.acc = static_cast<double>(tp + tn) / static_cast<double>(scores.size());
  if (tp + fn) m.sen = static_cast<double>(tp) / static_cast<double>(tp + fn);
  if (tn + fp) m.spe = static_cast<double>(tn) / static_cast<double>(tn + fp);
  return m;
}

double auc_mann_whitney(std::span<const double> scores, std::span<const int> labels) {
  check_pairs(scores, labels);
  const std::size_t n = scores.size();
  const auto n_pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw UndefinedMetricError("AUC undefined: labels contain a single class");

  // Rank-sum form. Tied groups share their mean rank; doubled ranks keep
  // every quantity integral, so the result equals the pairwise count exactly.
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::uint64_t rank2_sum = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
    const std::uint64_t shared2 = (i + 1) + j;  // 2 × mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (labels[idx[k]] == 1) rank2_sum += shared2;
    i = j;
  }
  // U = R_pos − n_pos(n_pos+1)/2; doubled: 2U = rank2_sum − n_pos(n_pos+1).
  const std::uint64_t u2 = rank2_sum - n_pos * (n_pos + 1);
  return static_cast<double>(u2) / 2.0 / static_cast<double>(n_pos * n_neg);
}

double percentile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw ContractError("percentile of empty data");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

ConfidenceInterval bootstrap_auc_ci(std::span<const double> scores, std::span<const int> labels, std::size_t trials,
                                    double level, std::uint64_t seed, std::size_t max_redraws) {
  auc_mann_whitney(scores, labels);  // validates the instance
  if (trials == 0) throw ContractError("bootstrap needs at least one trial");
  if (!(level > 0.0 && level < 1.0)) throw ContractError("bootstrap level must be in (0,1)");
  const std::size_t n = scores.size();
  std::vector<double> aucs;
  aucs.reserve(trials);
  std::vector<double> s(n);
  std::vector<int> l(n);
  for (std::size_t t = 0; t < trials; ++t) {
    auto rng = make_rng(seed, {fnv1a("bootstrap"), t});
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    bool ok = false;
    for (std::size_t attempt = 0; attempt <= max_redraws && !ok; ++attempt) {
      int pos = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = pick(rng);
        s[i] = scores[k];
        l[i] = labels[k];
        pos += l[i];
      }
      ok = pos > 0 && static_cast<std::size_t>(pos) < n;
    }
    if (!ok) throw UndefinedMetricError("bootstrap CI degenerate: every resample collapsed to one class");
    aucs.push_back(auc_mann_whitney(s, l));
  }
  std::sort(aucs.begin(), aucs.end());
  const double tail = (1.0 - level) / 2.0;
  return {percentile_sorted(aucs, tail), percentile_sorted(aucs, 1.0 - tail)};
}

SegmentationMetrics segmentation_metrics(std::span<const int> pred, std::span<const int> truth, int n_labels) {
  if (pred.size() != truth.size())
    throw ContractError("segmentation masks differ in size: " + std::to_string(pred.size()) + " vs " +
                        std::to_string(truth.size()));
  if (n_labels < 2) throw ContractError("segmentation needs at least 2 labels");
  std::vector<std::size_t> inter(static_cast<std::size_t>(n_labels), 0), uni(static_cast<std::size_t>(n_labels), 0);
  std::size_t p_fg = 0, g_fg = 0, both_fg = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const int p = pred[i], g = truth[i];
    if (p < 0 || p >= n_labels || g < 0 || g >= n_labels) throw IndexError("mask label out of range");
    if (p == g) {
      ++inter[static_cast<std::size_t>(p)];
      ++uni[static_cast<std::size_t>(p)];
    } else {
      ++uni[static_cast<std::size_t>(p)];
      ++uni[static_cast<std::size_t>(g)];
    }
    p_fg += p != 0;
    g_fg += g != 0;
    both_fg += (p != 0 && g != 0);
  }
  SegmentationMetrics m;
  if (p_fg + g_fg) {
    m.dice = 2.0 * static_cast<double>(both_fg) / static_cast<double>(p_fg + g_fg);
    m.foreground_iou = static_cast<double>(both_fg) / static_cast<double>(p_fg + g_fg - both_fg);
  }
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t l = 0; l < inter.size(); ++l) {
    if (uni[l] == 0) continue;
    sum += static_cast<double>(inter[l]) / static_cast<double>(uni[l]);
    ++present;
  }
  m.miou = present ? sum / static_cast<double>(present) : 0.0;
  return m;
}

std::vector<RocPoint> roc_points(std::span<const double> scores, std::span<const int> labels) {
  check_pairs(scores, labels);
  const auto n_pos = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  const double n_neg = static_cast<double>(labels.size()) - n_pos;
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<RocPoint> out{{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
  double tp = 0, fp = 0;
  for (std::size_t i = 0; i < idx.size();) {
    const double thr = scores[idx[i]];
    while (i < idx.size() && scores[idx[i]] == thr) {
      (labels[idx[i]] == 1 ? tp : fp) += 1.0;
      ++i;
    }
    out.push_back({thr, n_neg > 0 ? fp / n_neg : 0.0, n_pos > 0 ? tp / n_pos : 0.0});
  }
  return out;
}

}  // namespace muscle
