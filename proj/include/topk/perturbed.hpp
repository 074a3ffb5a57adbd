#pragma once

// Gaussian perturbed-optimizer smoothing of topsum_K and top_K.
//
//   topsum_{K,eps}(s) = E[topsum_K(s + eps Z)],   Z ~ N(0, I_L)
//   top_{K,eps}(s)    = topsum_{K,eps}(s) - topsum_{K-1,eps}(s)
//
// The Monte Carlo estimators take the noise as an explicit NoiseBatch. Both
// topsum estimates inside mc_top share that batch, so mc_top is exactly the
// mean of the pathwise K-th largest values of s + eps Z_b.

#include <cstdint>

#include <Eigen/Core>

#include "topk/noise.hpp"
#include "topk/score_core.hpp"

namespace topk {

using ScoreRef = Eigen::Ref<const VectorXd>;

/// (1/B) sum_b topsum_K(s + eps Z_b). Exactly topsum_K(s) when eps == 0.
double mc_topsum(const ScoreRef& s, Index k, double epsilon, const NoiseBatch& noise);

/// (1/B) sum_b top_K(s + eps Z_b). Exactly top_K(s) when eps == 0.
double mc_top(const ScoreRef& s, Index k, double epsilon, const NoiseBatch& noise);

/// (1/B) sum_b argtop_K(s + eps Z_b): entries in [0,1], summing to 1.
VectorXd mc_grad_top(const ScoreRef& s, Index k, double epsilon, const NoiseBatch& noise);

/// (1/B) sum_b argtops_K(s + eps Z_b): a point of the C_K polytope.
VectorXd mc_grad_topsum(const ScoreRef& s, Index k, double epsilon, const NoiseBatch& noise);

/// Value and gradient of the smoothed top_K from a single pass over the batch.
struct SmoothedTop {
  double value;
  VectorXd grad;
};
SmoothedTop mc_top_with_grad(const ScoreRef& s, Index k, double epsilon, const NoiseBatch& noise);

struct OracleEstimate {
  double mean;
  double std_error;
};

/// Streaming high-sample estimate of topsum_{K,eps}(s) with its standard
/// error. Draws from Xoshiro256(seed) without materialising the batch.
/// Requires samples >= 100000.
OracleEstimate oracle_smoothed_topsum(const ScoreRef& s, Index k, double epsilon,
                                      Index samples, std::uint64_t seed);

/// Same as above for top_{K,eps}(s) (pathwise K-th largest value).
OracleEstimate oracle_smoothed_top(const ScoreRef& s, Index k, double epsilon,
                                   Index samples, std::uint64_t seed);

inline constexpr Index kMinOracleSamples = 100000;

}  // namespace topk
