#pragma once

// Exact order statistics over score vectors.
//
// Ranking rule used everywhere in this library: entry i ranks above entry j
// when s[i] > s[j], or when s[i] == s[j] and i < j. Every operator below is
// therefore a deterministic function of its input, ties included.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace topk {

using Index = Eigen::Index;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using VectorXd = Vector<double>;

namespace detail {

template <typename Derived>
struct RanksAbove {
  const Eigen::DenseBase<Derived>& s;
  bool operator()(Index i, Index j) const {
    return s(i) > s(j) || (s(i) == s(j) && i < j);
  }
};

// Partitions `idx` (resized to L) so that idx[0..k) hold the k highest ranked
// coordinates and idx[k-1] is the k-th ranked one. Expected O(L).
template <typename Derived>
void select_top(const Eigen::DenseBase<Derived>& s, Index k, std::vector<Index>& idx) {
  const Index n = s.size();
  idx.resize(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index{0});
  if (k <= 0) return;
  std::nth_element(idx.begin(), idx.begin() + (k - 1), idx.end(), RanksAbove<Derived>{s});
}

inline void check_range(Index k, Index lo, Index hi, const char* what) {
  if (k < lo || k > hi) {
    throw std::invalid_argument(std::string(what) + ": K=" + std::to_string(k) +
                                " outside [" + std::to_string(lo) + ", " +
                                std::to_string(hi) + "]");
  }
}

}  // namespace detail

/// Throws std::invalid_argument unless s has at least two entries, all finite.
template <typename Derived>
void validate_scores(const Eigen::DenseBase<Derived>& s) {
  if (s.size() < 2) throw std::invalid_argument("score vector needs L >= 2");
  if (!s.derived().allFinite()) throw std::invalid_argument("score vector has non-finite entries");
}

/// K-th largest entry of s (K in [1, L]).
template <typename Derived>
typename Derived::Scalar top_k(const Eigen::DenseBase<Derived>& s, Index k) {
  detail::check_range(k, 1, s.size(), "top_k");
  std::vector<Index> idx;
  detail::select_top(s, k, idx);
  return s(idx[static_cast<std::size_t>(k - 1)]);
}

/// Sum of the K largest entries (K in [0, L]); topsum_k(s, 0) == 0.
template <typename Derived>
typename Derived::Scalar topsum_k(const Eigen::DenseBase<Derived>& s, Index k) {
  using Scalar = typename Derived::Scalar;
  detail::check_range(k, 0, s.size(), "topsum_k");
  if (k == 0) return Scalar(0);
  if (k == s.size()) return s.sum();
  std::vector<Index> idx;
  detail::select_top(s, k, idx);
  Scalar acc(0);
  for (Index i = 0; i < k; ++i) acc += s(idx[static_cast<std::size_t>(i)]);
  return acc;
}

/// Index of the K-th ranked coordinate.
template <typename Derived>
Index argtop_index(const Eigen::DenseBase<Derived>& s, Index k) {
  detail::check_range(k, 1, s.size(), "argtop_k");
  std::vector<Index> idx;
  detail::select_top(s, k, idx);
  return idx[static_cast<std::size_t>(k - 1)];
}

/// One-hot vector at the K-th ranked coordinate.
template <typename Derived>
Vector<typename Derived::Scalar> argtop_k(const Eigen::DenseBase<Derived>& s, Index k) {
  using Scalar = typename Derived::Scalar;
  Vector<Scalar> out = Vector<Scalar>::Zero(s.size());
  out(argtop_index(s, k)) = Scalar(1);
  return out;
}

/// K-hot vector at the K highest ranked coordinates.
template <typename Derived>
Vector<typename Derived::Scalar> argtops_k(const Eigen::DenseBase<Derived>& s, Index k) {
  using Scalar = typename Derived::Scalar;
  detail::check_range(k, 1, s.size(), "argtops_k");
  std::vector<Index> idx;
  detail::select_top(s, k, idx);
  Vector<Scalar> out = Vector<Scalar>::Zero(s.size());
  for (Index i = 0; i < k; ++i) out(idx[static_cast<std::size_t>(i)]) = Scalar(1);
  return out;
}

/// Coordinates ordered from highest to lowest rank.
template <typename Derived>
std::vector<Index> ranking(const Eigen::DenseBase<Derived>& s) {
  std::vector<Index> idx(static_cast<std::size_t>(s.size()));
  std::iota(idx.begin(), idx.end(), Index{0});
  std::sort(idx.begin(), idx.end(), detail::RanksAbove<Derived>{s});
  return idx;
}

}  // namespace topk
