// SPDX-License-Identifier: Apache-2.0
//
// Evaluation metrics. All functions are pure.

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace muscle {

/// A rate whose denominator was empty is `nullopt` rather than 0.
struct ClassificationMetrics {
  std::optional<double> acc, sen, spe;
};

/// Scores ≥ threshold are predicted positive. Labels must be 0/1.
ClassificationMetrics classification_metrics(std::span<const double> scores, std::span<const int> labels,
                                             double threshold);

/// Mann–Whitney AUC with half credit for ties. Throws UndefinedMetricError
/// if labels hold a single class.
double auc_mann_whitney(std::span<const double> scores, std::span<const int> labels);

struct ConfidenceInterval {
  double low = 0.0;
  double high = 0.0;
};

/// Percentile bootstrap over resampled test indices. Resamples with a single
/// class are redrawn up to `max_redraws` times per trial before giving up
/// with UndefinedMetricError.
ConfidenceInterval bootstrap_auc_ci(std::span<const double> scores, std::span<const int> labels,
                                    std::size_t trials = 100, double level = 0.95, std::uint64_t seed = 0,
                                    std::size_t max_redraws = 1000);

/// Linear-interpolated percentile of sorted data, q in [0,1].
double percentile_sorted(std::span<const double> sorted, double q);

struct SegmentationMetrics {
  std::optional<double> dice;  // foreground (label ≠ 0) Dice
  std::optional<double> foreground_iou;
  double miou = 0.0;  // mean over labels present in prediction or truth
};

SegmentationMetrics segmentation_metrics(std::span<const int> pred, std::span<const int> truth, int n_labels);

struct RocPoint {
  double threshold, fpr, tpr;
};

/// One point per distinct score (descending), plus the (0,0) origin.
std::vector<RocPoint> roc_points(std::span<const double> scores, std::span<const int> labels);

}  // namespace muscle
