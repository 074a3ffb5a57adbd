#include "topk/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace topk {

bool in_top_k(const Eigen::Ref<const VectorXd>& s, Index y, Index k) {
  Index above = 0;
  for (Index j = 0; j < s.size(); ++j)
    if (s(j) > s(y) || (s(j) == s(y) && j < y)) ++above;
  return above < k;
}

MetricsReport evaluate_scores(const Eigen::MatrixXd& scores, const std::vector<Index>& labels, Index k,
                              const std::vector<std::int64_t>& train_counts,
                              const ShotThresholds& thresholds) {
  if (labels.empty()) throw std::invalid_argument("evaluate: empty split");
  if (scores.rows() != static_cast<Index>(labels.size()))
    throw std::invalid_argument("evaluate: one score row per label required");
  const Index L = scores.cols();
  detail::check_range(k, 1, L, "evaluate");
  if (!train_counts.empty() && static_cast<Index>(train_counts.size()) != L)
    throw std::invalid_argument("evaluate: train_counts must have one entry per class");

  MetricsReport r;
  r.k = k;
  std::vector<Index> hits(static_cast<std::size_t>(L), 0);
  r.per_class_count.assign(static_cast<std::size_t>(L), 0);
  Index total_hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const Index y = labels[i];
    if (y < 0 || y >= L) throw std::invalid_argument("evaluate: label out of range");
    const bool hit = in_top_k(scores.row(static_cast<Index>(i)).transpose(), y, k);
    ++r.per_class_count[static_cast<std::size_t>(y)];
    if (hit) {
      ++hits[static_cast<std::size_t>(y)];
      ++total_hits;
    }
  }
  r.top_k_accuracy = static_cast<double>(total_hits) / static_cast<double>(labels.size());

  r.per_class.assign(static_cast<std::size_t>(L), std::numeric_limits<double>::quiet_NaN());
  double sums[3] = {0, 0, 0};
  Index counts[3] = {0, 0, 0};
  double macro = 0.0;
  Index present = 0;
  for (Index c = 0; c < L; ++c) {
    const auto n = r.per_class_count[static_cast<std::size_t>(c)];
    if (n == 0) continue;
    const double acc = static_cast<double>(hits[static_cast<std::size_t>(c)]) / static_cast<double>(n);
    r.per_class[static_cast<std::size_t>(c)] = acc;
    macro += acc;
    ++present;
    if (!train_counts.empty()) {
      const auto shots = train_counts[static_cast<std::size_t>(c)];
      const int group = shots < thresholds.few_below ? 0 : (shots > thresholds.many_above ? 2 : 1);
      sums[group] += acc;
      ++counts[group];
    }
  }
  r.macro_top_k_accuracy = macro / static_cast<double>(present);
  if (counts[0]) r.few_shot = sums[0] / static_cast<double>(counts[0]);
  if (counts[1]) r.medium_shot = sums[1] / static_cast<double>(counts[1]);
  if (counts[2]) r.many_shot = sums[2] / static_cast<double>(counts[2]);
  return r;
}

MetricsReport evaluate(const Model& model, const Split& split, Index k,
                       const std::vector<std::int64_t>& train_counts, const ShotThresholds& thresholds) {
  if (split.size() == 0) throw std::invalid_argument("evaluate: empty split");
  return evaluate_scores(model.score_matrix(split.features), split.labels, k, train_counts, thresholds);
}

}  // namespace topk
