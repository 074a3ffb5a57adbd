#include "topk/losses.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>

namespace topk {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_label(const ScoreRef& s, Index y) {
  validate_scores(s);
  if (y < 0 || y >= s.size())
    throw std::invalid_argument("label " + std::to_string(y) + " outside [0, " +
                                std::to_string(s.size()) + ")");
}

double log_add_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(-std::abs(a - b)));
}

// exp(a - total), treating an empty (-inf) total as zero weight.
double weight(double a, double total) {
  if (a == kNegInf || total == kNegInf) return 0.0;
  return std::exp(a - total);
}

LossEval hinge_from(double margin_term, VectorXd direction) {
  LossEval out;
  out.value = std::max(0.0, margin_term);
  if (margin_term >= 0.0) {
    out.grad = std::move(direction);
  } else {
    out.grad = VectorXd::Zero(direction.size());
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// MarginTable

MarginTable::MarginTable(std::vector<std::int64_t> counts, double C) : C_(C), counts_(std::move(counts)) {
  if (!(C > 0.0) || !std::isfinite(C)) throw std::invalid_argument("margin constant C must be > 0");
  if (counts_.empty()) throw std::invalid_argument("margin table needs at least one class");
  margins_.resize(static_cast<Index>(counts_.size()));
  for (std::size_t i = 0; i < counts_.size(); ++i) {
    if (counts_[i] < 1)
      throw std::invalid_argument("class " + std::to_string(i) + " has nonpositive count");
    margins_(static_cast<Index>(i)) = C / std::pow(static_cast<double>(counts_[i]), 0.25);
  }
}

MarginTable MarginTable::from_max_margin(std::vector<std::int64_t> counts, double max_margin) {
  if (counts.empty()) throw std::invalid_argument("margin table needs at least one class");
  const auto rarest = *std::min_element(counts.begin(), counts.end());
  if (rarest < 1) throw std::invalid_argument("margin table counts must be positive");
  const double C = max_margin * std::pow(static_cast<double>(rarest), 0.25);
  return MarginTable(std::move(counts), C);
}

MarginTable MarginTable::uniform(Index L, double margin) {
  MarginTable t;
  t.margins_ = VectorXd::Constant(L, margin);
  t.C_ = std::numeric_limits<double>::quiet_NaN();
  t.counts_.assign(static_cast<std::size_t>(L), 1);
  return t;
}

MarginTable build_margin_table(std::span<const std::int64_t> counts, double C) {
  return MarginTable(std::vector<std::int64_t>(counts.begin(), counts.end()), C);
}

// ---------------------------------------------------------------------------
// Losses

double loss_topk_01(const ScoreRef& s, Index y, Index k) {
  check_label(s, y);
  return top_k(s, k) > s(y) ? 1.0 : 0.0;
}

LossEval loss_ce(const ScoreRef& s, Index y) {
  check_label(s, y);
  const double hi = s.maxCoeff();
  const VectorXd shifted = (s.array() - hi).exp().matrix();
  const double lse = hi + std::log(shifted.sum());
  LossEval out;
  out.value = std::max(0.0, lse - s(y));
  out.grad = (s.array() - lse).exp().matrix();
  out.grad(y) -= 1.0;
  return out;
}

LossEval loss_ldam(const ScoreRef& s, Index y, const MarginTable& margins) {
  check_label(s, y);
  if (margins.size() != s.size()) throw std::invalid_argument("margin table size mismatch");
  VectorXd shifted = s;
  shifted(y) -= margins(y);
  return loss_ce(shifted, y);
}

LossEval loss_focal(const ScoreRef& s, Index y, double gamma, FocalForm form) {
  if (!(gamma >= 0.0)) throw std::invalid_argument("focal gamma must be >= 0");
  LossEval ce = loss_ce(s, y);
  // ce.grad = q - delta_y with q = softmax(s).
  const double p = ce.grad(y) + 1.0;
  double one_minus_p = 0.0;
  for (Index j = 0; j < s.size(); ++j)
    if (j != y) one_minus_p += ce.grad(j);

  LossEval out;
  if (form == FocalForm::standard) {
    const double modulation = std::pow(one_minus_p, gamma);
    out.value = modulation * ce.value;
    // d/dp [(1-p)^g (-ln p)] * p, collected as a coefficient of (delta_y - q).
    double curvature_term = 0.0;
    if (gamma != 0.0 && one_minus_p > 0.0)
      curvature_term = gamma * std::pow(one_minus_p, gamma - 1.0) * ce.value * p;
    const double coef = -curvature_term - modulation;
    out.grad = coef * (-ce.grad);
  } else {
    const double base = 1.0 - std::log(ce.value);
    out.value = std::pow(base, gamma) * ce.value;
    const double dvalue_dce = std::pow(base, gamma) - gamma * std::pow(base, gamma - 1.0);
    out.grad = dvalue_dce * ce.grad;
  }
  return out;
}

LossEval loss_hinge_topk(const ScoreRef& s, Index y, Index k) {
  check_label(s, y);
  const Index L = s.size();
  detail::check_range(k, 1, L - 1, "loss_hinge_topk");
  VectorXd rest(L - 1);
  rest << s.head(y), s.tail(L - 1 - y);
  const Index pick = argtop_index(rest, k);
  const Index j = pick < y ? pick : pick + 1;
  VectorXd direction = VectorXd::Zero(L);
  direction(j) += 1.0;
  direction(y) -= 1.0;
  return hinge_from(1.0 + s(j) - s(y), std::move(direction));
}

LossEval loss_cvx_hinge_topk(const ScoreRef& s, Index y, Index k) {
  check_label(s, y);
  const Index L = s.size();
  detail::check_range(k, 1, L, "loss_cvx_hinge_topk");
  VectorXd shifted = s.array() + 1.0;
  shifted(y) -= 1.0;
  const double kd = static_cast<double>(k);
  VectorXd direction = argtops_k(shifted, k) / kd;
  direction(y) -= 1.0;
  return hinge_from(topsum_k(shifted, k) / kd - s(y), std::move(direction));
}

LossEval loss_cal_hinge_topk(const ScoreRef& s, Index y, Index k) {
  check_label(s, y);
  detail::check_range(k, 1, s.size() - 1, "loss_cal_hinge_topk");
  const Index j = argtop_index(s, k + 1);
  VectorXd direction = VectorXd::Zero(s.size());
  direction(j) += 1.0;
  direction(y) -= 1.0;
  return hinge_from(1.0 + s(j) - s(y), std::move(direction));
}

LossEval loss_smoothed_hinge_topk(const ScoreRef& s, Index y, Index k, double tau) {
  check_label(s, y);
  if (!(tau > 0.0) || !std::isfinite(tau)) throw std::invalid_argument("tau must be > 0");
  const Index L = s.size();
  detail::check_range(k, 1, L - 1, "loss_smoothed_hinge_topk");

  const double scale = 1.0 / (static_cast<double>(k) * tau);
  const Index n = L - 1;  // coordinates other than y
  auto original = [y](Index i) { return i < y ? i : i + 1; };

  // table(i, c) = log e_c(x_1..x_i), e_c the elementary symmetric polynomial
  // of the exponentiated inputs x_j = s_j / (K tau), j != y.
  Eigen::MatrixXd table = Eigen::MatrixXd::Constant(n + 1, k + 1, kNegInf);
  table(0, 0) = 0.0;
  for (Index i = 1; i <= n; ++i) {
    const double x = s(original(i - 1)) * scale;
    table(i, 0) = 0.0;
    for (Index c = 1; c <= std::min(i, k); ++c)
      table(i, c) = log_add_exp(table(i - 1, c), x + table(i - 1, c - 1));
  }

  // Subsets without y contribute table(n, K); subsets with y contribute
  // x_y + table(n, K-1). The first log-sum-exp adds 1/tau to the former.
  const double xy = s(y) * scale;
  const double without_y = table(n, k);
  const double with_y = xy + table(n, k - 1);
  const double lse_loss = log_add_exp(1.0 / tau + without_y, with_y);
  const double lse_ref = log_add_exp(without_y, with_y);

  LossEval out;
  // tau * log1p((e^{1/tau} - 1) w) with w the weight of the subsets without
  // y; avoids cancelling two nearly equal log-sum-exps when the loss is small.
  const double inv_tau = 1.0 / tau;
  const double t = (without_y - lse_ref) + inv_tau + std::log1p(-std::exp(-inv_tau));
  out.value = tau * (t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)));

  // Reverse pass; adjoints are with respect to the x's, rescaled at the end.
  const double d_without = tau * (weight(1.0 / tau + without_y, lse_loss) - weight(without_y, lse_ref));
  const double d_with = tau * (weight(with_y, lse_loss) - weight(with_y, lse_ref));

  Eigen::MatrixXd adj = Eigen::MatrixXd::Zero(n + 1, k + 1);
  adj(n, k) = d_without;
  adj(n, k - 1) += d_with;
  VectorXd gx = VectorXd::Zero(L);
  gx(y) = d_with;
  for (Index i = n; i >= 1; --i) {
    const double x = s(original(i - 1)) * scale;
    double gi = 0.0;
    for (Index c = std::min(i, k); c >= 1; --c) {
      const double g = adj(i, c);
      if (g == 0.0) continue;
      const double total = table(i, c);
      const double keep = weight(table(i - 1, c), total);
      const double take = weight(x + table(i - 1, c - 1), total);
      adj(i - 1, c) += g * keep;
      adj(i - 1, c - 1) += g * take;
      gi += g * take;
    }
    gx(original(i - 1)) = gi;
  }
  out.grad = gx * scale;
  return out;
}

LossEval loss_noised_balanced(const ScoreRef& s, Index y, Index k, double epsilon,
                              const NoiseBatch& noise) {
  check_label(s, y);
  detail::check_range(k, 1, s.size() - 1, "loss_noised_balanced");
  SmoothedTop top = mc_top_with_grad(s, k + 1, epsilon, noise);
  top.grad(y) -= 1.0;
  return hinge_from(1.0 + top.value - s(y), std::move(top.grad));
}

LossEval loss_noised_imbalanced(const ScoreRef& s, Index y, Index k, double epsilon,
                                const NoiseBatch& noise, const MarginTable& margins) {
  check_label(s, y);
  detail::check_range(k, 1, s.size() - 1, "loss_noised_imbalanced");
  if (margins.size() != s.size()) throw std::invalid_argument("margin table size mismatch");
  SmoothedTop top = mc_top_with_grad(s, k + 1, epsilon, noise);
  top.grad(y) -= 1.0;
  return hinge_from(margins(y) + top.value - s(y), std::move(top.grad));
}

// ---------------------------------------------------------------------------
// Dispatch

namespace {

constexpr std::array<std::pair<LossKind, std::string_view>, 10> kNames{{
    {LossKind::topk_01, "topk_01"},
    {LossKind::ce, "ce"},
    {LossKind::ldam, "ldam"},
    {LossKind::focal, "focal"},
    {LossKind::hinge, "hinge"},
    {LossKind::cvx_hinge, "cvx_hinge"},
    {LossKind::cal_hinge, "cal_hinge"},
    {LossKind::smoothed_hinge, "smoothed_hinge"},
    {LossKind::noised_balanced, "noised_balanced"},
    {LossKind::noised_imbalanced, "noised_imbalanced"},
}};

}  // namespace

std::string_view loss_name(LossKind kind) {
  for (const auto& [k, name] : kNames)
    if (k == kind) return name;
  return "unknown";
}

LossKind parse_loss_kind(std::string_view name) {
  for (const auto& [k, n] : kNames)
    if (n == name) return k;
  throw std::invalid_argument("unknown loss '" + std::string(name) + "'");
}

const std::vector<LossKind>& all_loss_kinds() {
  static const std::vector<LossKind> kinds = [] {
    std::vector<LossKind> v;
    for (const auto& entry : kNames) v.push_back(entry.first);
    return v;
  }();
  return kinds;
}

bool has_gradient(LossKind kind) { return kind != LossKind::topk_01; }

bool uses_noise(LossKind kind) {
  return kind == LossKind::noised_balanced || kind == LossKind::noised_imbalanced;
}

bool uses_margins(LossKind kind) {
  return kind == LossKind::ldam || kind == LossKind::noised_imbalanced;
}

LossEval evaluate_loss(const LossSpec& spec, const ScoreRef& s, Index y, const NoiseBatch* noise) {
  if (uses_noise(spec.kind) && noise == nullptr)
    throw std::invalid_argument(std::string(loss_name(spec.kind)) + " needs a NoiseBatch");
  if (uses_margins(spec.kind) && !spec.margins)
    throw std::invalid_argument(std::string(loss_name(spec.kind)) + " needs a margin table");
  switch (spec.kind) {
    case LossKind::topk_01:
      return {loss_topk_01(s, y, spec.k), VectorXd()};
    case LossKind::ce:
      return loss_ce(s, y);
    case LossKind::ldam:
      return loss_ldam(s, y, *spec.margins);
    case LossKind::focal:
      return loss_focal(s, y, spec.gamma, spec.focal_form);
    case LossKind::hinge:
      return loss_hinge_topk(s, y, spec.k);
    case LossKind::cvx_hinge:
      return loss_cvx_hinge_topk(s, y, spec.k);
    case LossKind::cal_hinge:
      return loss_cal_hinge_topk(s, y, spec.k);
    case LossKind::smoothed_hinge:
      return loss_smoothed_hinge_topk(s, y, spec.k, spec.tau);
    case LossKind::noised_balanced:
      return loss_noised_balanced(s, y, spec.k, spec.epsilon, *noise);
    case LossKind::noised_imbalanced:
      return loss_noised_imbalanced(s, y, spec.k, spec.epsilon, *noise, *spec.margins);
  }
  throw std::logic_error("unhandled loss kind");
}

}  // namespace topk
