#include "topk/perturbed.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace topk {

namespace {

void check_noise(const ScoreRef& s, const NoiseBatch& noise) {
  if (noise.width() != s.size()) {
    throw std::invalid_argument("noise width " + std::to_string(noise.width()) +
                                " does not match score length " + std::to_string(s.size()));
  }
}

void check_epsilon(double epsilon) {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon))
    throw std::invalid_argument("epsilon must be finite and >= 0");
}

// Calls visit(perturbed, idx) for each noise row after partitioning the top k.
template <typename Visit>
void for_each_perturbed(const ScoreRef& s, Index k, double epsilon, const NoiseBatch& noise,
                        Visit&& visit) {
  VectorXd perturbed(s.size());
  std::vector<Index> idx;
  for (Index b = 0; b < noise.size(); ++b) {
    perturbed = s + epsilon * noise.row(b).transpose();
    detail::select_top(perturbed, k, idx);
    visit(perturbed, idx);
  }
}

template <typename PerSample>
OracleEstimate streaming_oracle(const ScoreRef& s, double epsilon, Index samples,
                                std::uint64_t seed, PerSample&& per_sample) {
  if (samples < kMinOracleSamples)
    throw std::invalid_argument("oracle estimators need at least 1e5 samples");
  Xoshiro256 rng(seed);
  VectorXd perturbed(s.size());
  std::vector<Index> idx;
  // Welford keeps the variance accurate for large means.
  double mean = 0.0, m2 = 0.0;
  for (Index n = 1; n <= samples; ++n) {
    for (Index j = 0; j < s.size(); ++j) perturbed(j) = s(j) + epsilon * rng.normal();
    const double x = per_sample(perturbed, idx);
    const double delta = x - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta * (x - mean);
  }
  const double var = m2 / static_cast<double>(samples - 1);
  return {mean, std::sqrt(var / static_cast<double>(samples))};
}

}  // namespace

double mc_topsum(const ScoreRef& s, Index k, double epsilon, const NoiseBatch& noise) {
  check_noise(s, noise);
  check_epsilon(epsilon);
  detail::check_range(k, 0, s.size(), "mc_topsum");
  if (epsilon == 0.0) return topsum_k(s, k);
  if (k == 0) return 0.0;
  double total = 0.0;
  for_each_perturbed(s, k, epsilon, noise, [&](const VectorXd& p, const std::vector<Index>& idx) {
    double acc = 0.0;
    for (Index i = 0; i < k; ++i) acc += p(idx[static_cast<std::size_t>(i)]);
    total += acc;
  });
  return total / static_cast<double>(noise.size());
}

double mc_top(const ScoreRef& s, Index k, double epsilon, const NoiseBatch& noise) {
  return mc_top_with_grad(s, k, epsilon, noise).value;
}

VectorXd mc_grad_top(const ScoreRef& s, Index k, double epsilon, const NoiseBatch& noise) {
  return mc_top_with_grad(s, k, epsilon, noise).grad;
}

SmoothedTop mc_top_with_grad(const ScoreRef& s, Index k, double epsilon, const NoiseBatch& noise) {
  check_noise(s, noise);
  check_epsilon(epsilon);
  detail::check_range(k, 1, s.size(), "mc_top");
  if (epsilon == 0.0) return {top_k(s, k), argtop_k(s, k)};
  // Selects on raw values, then recovers the index under the tie rule with
  // one scan: the K-th ranked entry is the (K - #above)-th copy of the value.
  const Index L = s.size();
  double total = 0.0;
  VectorXd counts = VectorXd::Zero(L);
  VectorXd perturbed(L);
  std::vector<double> values(static_cast<std::size_t>(L));
  for (Index b = 0; b < noise.size(); ++b) {
    perturbed = s + epsilon * noise.row(b).transpose();
    std::copy(perturbed.data(), perturbed.data() + L, values.begin());
    std::nth_element(values.begin(), values.begin() + (k - 1), values.end(), std::greater<>());
    const double v = values[static_cast<std::size_t>(k - 1)];
    Index above = 0;
    for (Index j = 0; j < L; ++j) above += perturbed(j) > v;
    Index j = 0;
    for (Index seen = above; j < L; ++j)
      if (perturbed(j) == v && ++seen == k) break;
    total += v;
    counts(j) += 1.0;
  }
  const double b = static_cast<double>(noise.size());
  return {total / b, counts / b};
}

VectorXd mc_grad_topsum(const ScoreRef& s, Index k, double epsilon, const NoiseBatch& noise) {
  check_noise(s, noise);
  check_epsilon(epsilon);
  detail::check_range(k, 1, s.size(), "mc_grad_topsum");
  if (epsilon == 0.0) return argtops_k(s, k);
  VectorXd counts = VectorXd::Zero(s.size());
  for_each_perturbed(s, k, epsilon, noise, [&](const VectorXd&, const std::vector<Index>& idx) {
    for (Index i = 0; i < k; ++i) counts(idx[static_cast<std::size_t>(i)]) += 1.0;
  });
  return counts / static_cast<double>(noise.size());
}

OracleEstimate oracle_smoothed_topsum(const ScoreRef& s, Index k, double epsilon, Index samples,
                                      std::uint64_t seed) {
  check_epsilon(epsilon);
  detail::check_range(k, 0, s.size(), "oracle_smoothed_topsum");
  if (epsilon == 0.0 || k == 0) return {topsum_k(s, k), 0.0};
  return streaming_oracle(s, epsilon, samples, seed,
                          [k](const VectorXd& p, std::vector<Index>& idx) {
                            detail::select_top(p, k, idx);
                            double acc = 0.0;
                            for (Index i = 0; i < k; ++i) acc += p(idx[static_cast<std::size_t>(i)]);
                            return acc;
                          });
}

OracleEstimate oracle_smoothed_top(const ScoreRef& s, Index k, double epsilon, Index samples,
                                   std::uint64_t seed) {
  check_epsilon(epsilon);
  detail::check_range(k, 1, s.size(), "oracle_smoothed_top");
  if (epsilon == 0.0) return {top_k(s, k), 0.0};
  return streaming_oracle(s, epsilon, samples, seed,
                          [k](const VectorXd& p, std::vector<Index>& idx) {
                            detail::select_top(p, k, idx);
                            return p(idx[static_cast<std::size_t>(k - 1)]);
                          });
}

}  // namespace topk
