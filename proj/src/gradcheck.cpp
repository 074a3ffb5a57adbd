#include "topk/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace topk {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

VectorXd without(const VectorXd& s, Index y) {
  VectorXd rest(s.size() - 1);
  rest << s.head(y), s.tail(s.size() - 1 - y);
  return rest;
}

// Gap between the r-th and (r+1)-th ranked values only.
double boundary_gap(const VectorXd& v, Index r) {
  if (r <= 0 || r >= v.size()) return kInf;
  std::vector<double> sorted(v.data(), v.data() + v.size());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  return sorted[static_cast<std::size_t>(r - 1)] - sorted[static_cast<std::size_t>(r)];
}

}  // namespace

VectorXd central_difference(const std::function<double(const VectorXd&)>& f, const VectorXd& s,
                            double step) {
  VectorXd grad(s.size());
  VectorXd probe = s;
  for (Index j = 0; j < s.size(); ++j) {
    probe(j) = s(j) + step;
    const double up = f(probe);
    probe(j) = s(j) - step;
    const double down = f(probe);
    probe(j) = s(j);
    grad(j) = (up - down) / (2.0 * step);
  }
  return grad;
}

double rank_gap(const VectorXd& v, Index r) {
  detail::check_range(r, 1, v.size(), "rank_gap");
  std::vector<double> sorted(v.data(), v.data() + v.size());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const auto i = static_cast<std::size_t>(r - 1);
  double gap = kInf;
  if (i > 0) gap = std::min(gap, sorted[i - 1] - sorted[i]);
  if (i + 1 < sorted.size()) gap = std::min(gap, sorted[i] - sorted[i + 1]);
  return gap;
}

double kink_distance(const LossSpec& spec, const VectorXd& s, Index y, const NoiseBatch* noise) {
  switch (spec.kind) {
    case LossKind::ce:
    case LossKind::ldam:
    case LossKind::focal:
    case LossKind::smoothed_hinge:
      return kInf;
    case LossKind::topk_01:
      return 0.0;
    case LossKind::hinge: {
      const VectorXd rest = without(s, y);
      const double margin = 1.0 + top_k(rest, spec.k) - s(y);
      return std::min(rank_gap(rest, spec.k), std::abs(margin));
    }
    case LossKind::cvx_hinge: {
      VectorXd shifted = s.array() + 1.0;
      shifted(y) -= 1.0;
      const double margin = topsum_k(shifted, spec.k) / static_cast<double>(spec.k) - s(y);
      return std::min(boundary_gap(shifted, spec.k), std::abs(margin));
    }
    case LossKind::cal_hinge: {
      const double margin = 1.0 + top_k(s, spec.k + 1) - s(y);
      return std::min(rank_gap(s, spec.k + 1), std::abs(margin));
    }
    case LossKind::noised_balanced:
    case LossKind::noised_imbalanced: {
      if (noise == nullptr) throw std::invalid_argument("kink_distance: noised loss needs noise");
      double gap = kInf;
      VectorXd perturbed(s.size());
      for (Index b = 0; b < noise->size(); ++b) {
        perturbed = s + spec.epsilon * noise->row(b).transpose();
        gap = std::min(gap, rank_gap(perturbed, spec.k + 1));
      }
      const double m = spec.kind == LossKind::noised_imbalanced ? (*spec.margins)(y) : 1.0;
      const double margin = m + mc_top(s, spec.k + 1, spec.epsilon, *noise) - s(y);
      return std::min(gap, std::abs(margin));
    }
  }
  return 0.0;
}

double default_step(LossKind kind) {
  switch (kind) {
    case LossKind::ce:
    case LossKind::ldam:
    case LossKind::focal:
    case LossKind::smoothed_hinge:
      return 1e-6;
    default:
      return 1e-7;
  }
}

std::vector<GradcheckRow> run_gradcheck(const GradcheckOptions& options) {
  const LossSpec& spec = options.spec;
  if (!has_gradient(spec.kind))
    throw std::invalid_argument(std::string(loss_name(spec.kind)) + " has no gradient to check");
  if (options.L < 2) throw std::invalid_argument("gradcheck: L must be >= 2");
  if (options.trials < 1) throw std::invalid_argument("gradcheck: trials must be >= 1");
  const double step = options.step > 0.0 ? options.step : default_step(spec.kind);

  std::vector<GradcheckRow> rows;
  rows.reserve(static_cast<std::size_t>(options.trials));
  for (Index t = 0; t < options.trials; ++t) {
    Xoshiro256 rng(derive_seed(options.seed, static_cast<std::uint64_t>(t)));
    GradcheckRow row;
    row.trial = t;
    VectorXd s(options.L);
    std::optional<NoiseBatch> noise;
    Index y = 0;
    for (;; ++row.resamples) {
      if (row.resamples > options.max_resamples)
        throw std::runtime_error("gradcheck: could not find a point away from kinks");
      for (Index j = 0; j < options.L; ++j) s(j) = options.score_scale * rng.normal();
      y = static_cast<Index>(rng.below(static_cast<std::uint64_t>(options.L)));
      if (uses_noise(spec.kind))
        noise = sample_noise(options.L, spec.noise_samples, rng());
      row.kink_distance = kink_distance(spec, s, y, noise ? &*noise : nullptr);
      if (row.kink_distance > options.kink_margin) break;
    }
    const NoiseBatch* z = noise ? &*noise : nullptr;
    const LossEval eval = evaluate_loss(spec, s, y, z);
    const VectorXd fd = central_difference(
        [&](const VectorXd& p) { return evaluate_loss(spec, p, y, z).value; }, s, step);
    row.label = y;
    row.value = eval.value;
    row.max_abs_error = (eval.grad - fd).cwiseAbs().maxCoeff();
    row.passed = row.max_abs_error <= options.tolerance;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace topk
