#pragma once

// Top-K classification losses acting on logits. Labels are 0-based.
// Every differentiable loss returns its value together with its
// (sub)gradient with respect to the scores, so callers can treat them
// interchangeably. Hinge-type losses use the ">=" activation convention: at
// the kink the active-branch subgradient is returned.

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "topk/noise.hpp"
#include "topk/perturbed.hpp"
#include "topk/score_core.hpp"

namespace topk {

struct LossEval {
  double value = 0.0;
  VectorXd grad;
};

/// Per-class margins m_y = C / n_y^(1/4): rarer classes get larger margins.
class MarginTable {
 public:
  MarginTable(std::vector<std::int64_t> counts, double C);

  /// Chooses C so that the rarest class gets exactly `max_margin`.
  static MarginTable from_max_margin(std::vector<std::int64_t> counts, double max_margin);
  /// The same margin for every class (C is recorded as NaN).
  static MarginTable uniform(Index L, double margin);

  const VectorXd& margins() const { return margins_; }
  double operator()(Index y) const { return margins_(y); }
  Index size() const { return margins_.size(); }
  double C() const { return C_; }
  double max_margin() const { return margins_.maxCoeff(); }
  const std::vector<std::int64_t>& counts() const { return counts_; }

 private:
  MarginTable() = default;
  VectorXd margins_;
  double C_ = 0.0;
  std::vector<std::int64_t> counts_;
};

MarginTable build_margin_table(std::span<const std::int64_t> counts, double C);

/// 1 if top_K(s) > s_y else 0. No gradient.
double loss_topk_01(const ScoreRef& s, Index y, Index k);

LossEval loss_ce(const ScoreRef& s, Index y);

/// Cross entropy after shifting the true-class logit down by m_y.
LossEval loss_ldam(const ScoreRef& s, Index y, const MarginTable& margins);

enum class FocalForm {
  standard,       // (1 - p_y)^gamma * (-ln p_y)
  table_literal,  // (1 - ln CE)^gamma * CE, kept for side-by-side inspection only
};

LossEval loss_focal(const ScoreRef& s, Index y, double gamma,
                    FocalForm form = FocalForm::standard);

/// (1 + top_K(s without y) - s_y)_+ ; requires K <= L-1.
LossEval loss_hinge_topk(const ScoreRef& s, Index y, Index k);

/// ((1/K) topsum_K(1 - delta_y + s) - s_y)_+ ; convex upper bound of the above.
LossEval loss_cvx_hinge_topk(const ScoreRef& s, Index y, Index k);

/// (1 + top_{K+1}(s) - s_y)_+ ; requires K <= L-1.
LossEval loss_cal_hinge_topk(const ScoreRef& s, Index y, Index k);

/// Log-sum-exp smoothing over all K-subsets:
///   tau * log sum_A exp(1{y not in A}/tau + sum_{j in A} s_j/(K tau))
/// - tau * log sum_A exp(sum_{j in A} s_j/(K tau))
/// evaluated with an O(L K) log-space recursion and its reverse pass.
LossEval loss_smoothed_hinge_topk(const ScoreRef& s, Index y, Index k, double tau);

/// (1 + mc_top(s, K+1) - s_y)_+ with gradient 1{. >= 0} (mc_grad_top - delta_y).
LossEval loss_noised_balanced(const ScoreRef& s, Index y, Index k, double epsilon,
                              const NoiseBatch& noise);

/// As loss_noised_balanced with margin m_y in place of 1.
LossEval loss_noised_imbalanced(const ScoreRef& s, Index y, Index k, double epsilon,
                                const NoiseBatch& noise, const MarginTable& margins);

// ---------------------------------------------------------------------------
// Uniform dispatch

enum class LossKind {
  topk_01,
  ce,
  ldam,
  focal,
  hinge,
  cvx_hinge,
  cal_hinge,
  smoothed_hinge,
  noised_balanced,
  noised_imbalanced,
};

std::string_view loss_name(LossKind kind);
/// Accepts the names returned by loss_name(); throws std::invalid_argument otherwise.
LossKind parse_loss_kind(std::string_view name);
const std::vector<LossKind>& all_loss_kinds();

bool has_gradient(LossKind kind);
bool uses_noise(LossKind kind);
bool uses_margins(LossKind kind);

struct LossSpec {
  LossKind kind = LossKind::ce;
  Index k = 1;
  double epsilon = 0.1;
  Index noise_samples = 3;
  double tau = 1.0;
  double gamma = 2.0;
  FocalForm focal_form = FocalForm::standard;
  std::shared_ptr<const MarginTable> margins;
};

/// Evaluates the loss named by `spec`. `noise` must be supplied for noised
/// losses and `spec.margins` for LDAM / noised imbalanced. For topk_01 the
/// gradient is left empty.
LossEval evaluate_loss(const LossSpec& spec, const ScoreRef& s, Index y,
                       const NoiseBatch* noise = nullptr);

}  // namespace topk
