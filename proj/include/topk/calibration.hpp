#pragma once

// Empirical probes for top-K calibration. These are falsification tools:
// a zero gap on a finite grid is evidence against calibration, a positive
// gap is merely consistent with it.

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "topk/losses.hpp"

namespace topk {

/// A loss evaluated at one (scores, label) pair.
using PointLoss = std::function<double(const VectorXd&, Index)>;

/// Throws std::invalid_argument unless pi is a probability vector
/// (entries >= 0, sum within 1e-12 of one).
void validate_distribution(const ScoreRef& pi);

/// P_K(y_vec, y_ref): for every k,
///   y_ref_k > top_{K+1}(y_ref) implies y_vec_k > top_{K+1}(y_vec), and
///   y_ref_k < top_K(y_ref)     implies y_vec_k < top_K(y_vec).
bool top_k_preserving(const ScoreRef& y_vec, const ScoreRef& y_ref, Index k);

/// sum_y pi_y * loss(s, y).
double conditional_risk(const PointLoss& loss, const ScoreRef& s, const ScoreRef& pi);

/// Per-label losses tabulated on the cube [-radius, radius]^L with `steps`
/// points per axis (coordinates r (2i/(steps-1) - 1), so 0 is on the grid
/// for odd step counts).
class LossGrid {
 public:
  LossGrid(const PointLoss& loss, Index L, double radius = 3.0, Index steps = 61);

  Index dimension() const { return points_.cols(); }
  Index size() const { return points_.rows(); }
  const Eigen::MatrixXd& points() const { return points_; }
  const Eigen::MatrixXd& losses() const { return losses_; }
  double radius() const { return radius_; }
  Index steps() const { return steps_; }

  static constexpr Index kMaxDimension = 4;
  static constexpr Index kMaxPoints = 20'000'000;

 private:
  Eigen::MatrixXd points_;  // one grid point per row
  Eigen::MatrixXd losses_;  // losses_(i, y) = loss(points_.row(i), y)
  double radius_;
  Index steps_;
};

struct ProbeReport {
  std::string loss;
  Index k = 1;
  VectorXd pi;
  double unrestricted_min = 0.0;
  double restricted_min = 0.0;  // +inf when every grid point is top-K preserving
  double gap = 0.0;
  VectorXd unrestricted_argmin;
  VectorXd restricted_argmin;
};

/// Minimises the conditional risk over the grid, once over all points and
/// once over points that are NOT top-K preserving with respect to pi.
ProbeReport calibration_probe(const LossGrid& grid, const std::string& loss_name,
                              const VectorXd& pi, Index k);

/// Convenience overload that builds the grid first.
ProbeReport calibration_probe(const PointLoss& loss, const std::string& loss_name,
                              const VectorXd& pi, Index k, double radius = 3.0,
                              Index steps = 61);

/// Probes every pi on the simplex lattice {c / pi_steps} and returns the
/// reports sorted by increasing gap (pi with no restricted points dropped).
std::vector<ProbeReport> search_calibration_gaps(const LossGrid& grid,
                                                 const std::string& loss_name, Index k,
                                                 Index pi_steps);

/// Columns: loss, K, pi, unrestricted_min, restricted_min, gap.
void write_probe_csv(std::ostream& out, const std::vector<ProbeReport>& reports);

}  // namespace topk
