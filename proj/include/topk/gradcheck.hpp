#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "topk/losses.hpp"

namespace topk {

/// Central differences of f at s, one coordinate at a time.
VectorXd central_difference(const std::function<double(const VectorXd&)>& f, const VectorXd& s,
                            double step);

/// Smallest gap between the r-th ranked entry of v and its ranked neighbours
/// (1-based r). Zero when the r-th value is tied.
double rank_gap(const VectorXd& v, Index r);

/// Distance from (s, y) to the nearest point where the loss is not
/// differentiable: rank ties that move the selected coordinate, or the
/// hinge kink. +infinity for smooth losses.
double kink_distance(const LossSpec& spec, const VectorXd& s, Index y, const NoiseBatch* noise);

/// Step sizes the checker uses: piecewise-linear losses tolerate a tiny step,
/// smooth ones need a larger step to keep rounding error down.
double default_step(LossKind kind);

struct GradcheckOptions {
  LossSpec spec;
  Index L = 10;
  Index trials = 100;
  std::uint64_t seed = 0;
  double score_scale = 1.0;
  double kink_margin = 1e-6;
  double step = 0.0;  // 0 -> default_step(kind)
  double tolerance = 1e-4;
  int max_resamples = 10000;
};

struct GradcheckRow {
  Index trial = 0;
  Index label = 0;
  double value = 0.0;
  double max_abs_error = 0.0;
  double kink_distance = 0.0;
  int resamples = 0;
  bool passed = false;
};

/// Runs `trials` independent checks. Each trial draws s ~ N(0, scale^2 I),
/// a label, and (for noised losses) a pinned NoiseBatch, resampling until the
/// point sits farther than kink_margin from any kink. Throws
/// std::invalid_argument for losses without a gradient.
std::vector<GradcheckRow> run_gradcheck(const GradcheckOptions& options);

}  // namespace topk
