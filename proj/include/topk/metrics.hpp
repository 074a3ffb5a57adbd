#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "topk/dataset.hpp"
#include "topk/model.hpp"

namespace topk {

/// Shot groups by number of training samples: few < few_below,
/// many > many_above, medium in between (inclusive).
struct ShotThresholds {
  std::int64_t few_below = 20;
  std::int64_t many_above = 100;
};

struct MetricsReport {
  Index k = 1;
  double top_k_accuracy = 0.0;
  /// Unweighted mean of per-class accuracies over classes present in the split.
  double macro_top_k_accuracy = 0.0;
  /// Macro accuracy restricted to each shot group; empty if no class of
  /// that group appears in the split.
  std::optional<double> few_shot, medium_shot, many_shot;
  std::vector<double> per_class;       // NaN for classes absent from the split
  std::vector<Index> per_class_count;  // samples of each class in the split
};

/// True when y is among the K highest ranked entries of s (ties are broken
/// towards the lower index, so a constant scorer is not rewarded).
bool in_top_k(const Eigen::Ref<const VectorXd>& s, Index y, Index k);

/// Metrics from precomputed scores (one row per sample). train_counts drive
/// the shot grouping; pass an empty vector to skip the grouping.
MetricsReport evaluate_scores(const Eigen::MatrixXd& scores, const std::vector<Index>& labels, Index k,
                              const std::vector<std::int64_t>& train_counts,
                              const ShotThresholds& thresholds = {});

MetricsReport evaluate(const Model& model, const Split& split, Index k,
                       const std::vector<std::int64_t>& train_counts,
                       const ShotThresholds& thresholds = {});

}  // namespace topk
