#include "topk/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "topk/csv.hpp"

namespace topk {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Visits every composition of `total` into `parts` nonnegative integers.
template <typename Visit>
void for_each_composition(Index parts, Index total, std::vector<Index>& acc, Visit&& visit) {
  if (parts == 1) {
    acc.push_back(total);
    visit(acc);
    acc.pop_back();
    return;
  }
  for (Index c = 0; c <= total; ++c) {
    acc.push_back(c);
    for_each_composition(parts - 1, total - c, acc, visit);
    acc.pop_back();
  }
}

}  // namespace

void validate_distribution(const ScoreRef& pi) {
  if (pi.size() < 2) throw std::invalid_argument("distribution needs at least two classes");
  if (!pi.allFinite() || (pi.array() < 0.0).any())
    throw std::invalid_argument("distribution entries must be finite and >= 0");
  if (std::abs(pi.sum() - 1.0) > 1e-12) throw std::invalid_argument("distribution must sum to 1");
}

bool top_k_preserving(const ScoreRef& y_vec, const ScoreRef& y_ref, Index k) {
  if (y_vec.size() != y_ref.size()) throw std::invalid_argument("top_k_preserving: length mismatch");
  detail::check_range(k, 1, y_ref.size() - 1, "top_k_preserving");
  const double ref_next = top_k(y_ref, k + 1);
  const double ref_kth = top_k(y_ref, k);
  const double vec_next = top_k(y_vec, k + 1);
  const double vec_kth = top_k(y_vec, k);
  for (Index i = 0; i < y_ref.size(); ++i) {
    if (y_ref(i) > ref_next && !(y_vec(i) > vec_next)) return false;
    if (y_ref(i) < ref_kth && !(y_vec(i) < vec_kth)) return false;
  }
  return true;
}

double conditional_risk(const PointLoss& loss, const ScoreRef& s, const ScoreRef& pi) {
  validate_distribution(pi);
  if (pi.size() != s.size()) throw std::invalid_argument("conditional_risk: length mismatch");
  const VectorXd scores = s;
  double risk = 0.0;
  for (Index y = 0; y < pi.size(); ++y)
    if (pi(y) != 0.0) risk += pi(y) * loss(scores, y);
  return risk;
}

LossGrid::LossGrid(const PointLoss& loss, Index L, double radius, Index steps)
    : radius_(radius), steps_(steps) {
  if (L < 2 || L > kMaxDimension)
    throw std::invalid_argument("calibration grid supports 2 <= L <= 4");
  if (steps < 2) throw std::invalid_argument("calibration grid needs at least 2 steps per axis");
  if (!(radius > 0.0)) throw std::invalid_argument("calibration grid radius must be > 0");
  double count = std::pow(static_cast<double>(steps), static_cast<double>(L));
  if (count > static_cast<double>(kMaxPoints))
    throw std::invalid_argument("calibration grid too large: " + std::to_string(count) + " points");
  const Index n = static_cast<Index>(count);

  VectorXd axis(steps);
  for (Index i = 0; i < steps; ++i)
    axis(i) = radius * (2.0 * static_cast<double>(i) / static_cast<double>(steps - 1) - 1.0);

  points_.resize(n, L);
  losses_.resize(n, L);
  VectorXd s(L);
  for (Index p = 0; p < n; ++p) {
    Index rem = p;
    for (Index j = L - 1; j >= 0; --j) {
      s(j) = axis(rem % steps);
      rem /= steps;
    }
    points_.row(p) = s.transpose();
    for (Index y = 0; y < L; ++y) losses_(p, y) = loss(s, y);
  }
}

ProbeReport calibration_probe(const LossGrid& grid, const std::string& loss_name, const VectorXd& pi,
                              Index k) {
  validate_distribution(pi);
  if (pi.size() != grid.dimension()) throw std::invalid_argument("calibration_probe: pi size mismatch");
  detail::check_range(k, 1, pi.size() - 1, "calibration_probe");

  ProbeReport report;
  report.loss = loss_name;
  report.k = k;
  report.pi = pi;
  report.unrestricted_min = kInf;
  report.restricted_min = kInf;
  const VectorXd risks = grid.losses() * pi;
  for (Index p = 0; p < grid.size(); ++p) {
    const double r = risks(p);
    if (r < report.unrestricted_min) {
      report.unrestricted_min = r;
      report.unrestricted_argmin = grid.points().row(p).transpose();
    }
    if (r < report.restricted_min && !top_k_preserving(grid.points().row(p).transpose(), pi, k)) {
      report.restricted_min = r;
      report.restricted_argmin = grid.points().row(p).transpose();
    }
  }
  report.gap = report.restricted_min - report.unrestricted_min;
  return report;
}

ProbeReport calibration_probe(const PointLoss& loss, const std::string& loss_name, const VectorXd& pi,
                              Index k, double radius, Index steps) {
  return calibration_probe(LossGrid(loss, pi.size(), radius, steps), loss_name, pi, k);
}

std::vector<ProbeReport> search_calibration_gaps(const LossGrid& grid, const std::string& loss_name,
                                                 Index k, Index pi_steps) {
  if (pi_steps < 1) throw std::invalid_argument("pi_steps must be >= 1");
  std::vector<ProbeReport> reports;
  std::vector<Index> acc;
  for_each_composition(grid.dimension(), pi_steps, acc, [&](const std::vector<Index>& parts) {
    VectorXd pi(grid.dimension());
    for (Index j = 0; j < pi.size(); ++j)
      pi(j) = static_cast<double>(parts[static_cast<std::size_t>(j)]) / static_cast<double>(pi_steps);
    pi /= pi.sum();
    ProbeReport r = calibration_probe(grid, loss_name, pi, k);
    if (std::isfinite(r.restricted_min)) reports.push_back(std::move(r));
  });
  std::stable_sort(reports.begin(), reports.end(),
                   [](const ProbeReport& a, const ProbeReport& b) { return a.gap < b.gap; });
  return reports;
}

void write_probe_csv(std::ostream& out, const std::vector<ProbeReport>& reports) {
  CsvWriter csv(out);
  csv.header({"loss", "K", "pi", "unrestricted_min", "restricted_min", "gap"});
  for (const auto& r : reports) {
    std::ostringstream pi;
    for (Index j = 0; j < r.pi.size(); ++j) pi << (j ? ";" : "") << format_double(r.pi(j));
    csv.row({r.loss, std::to_string(r.k), pi.str(), format_double(r.unrestricted_min),
             format_double(r.restricted_min), format_double(r.gap)});
  }
}

}  // namespace topk
