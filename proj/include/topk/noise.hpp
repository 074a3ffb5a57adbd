#pragma once

#include <cstdint>
#include <optional>

#include <Eigen/Core>

namespace topk {

using RowMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// xoshiro256** (Blackman & Vigna), state seeded by expanding a 64-bit seed
/// through splitmix64. Satisfies UniformRandomBitGenerator so it can drive
/// std:: distributions, but the library's own normal draws go through
/// `normal()` so sample streams are identical on every standard library.
class Xoshiro256 {
 public:
  using result_type = std::uint64_t;

  explicit Xoshiro256(std::uint64_t seed);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  result_type operator()();

  /// Uniform on the open interval (0, 1), 53 bits of resolution.
  double uniform();
  /// Integer uniform on [0, n).
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via the basic Box-Muller transform; the second variate
  /// of each pair is cached for the next call.
  double normal();

 private:
  std::uint64_t s_[4];
  std::optional<double> spare_;
};

/// Derives an independent stream seed from (seed, stream) with splitmix64.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// B standard-normal perturbation vectors of width L, one per row.
/// Immutable once built; share freely across threads.
class NoiseBatch {
 public:
  /// Wraps explicit draws (e.g. a golden test vector). Each row is one Z_b.
  explicit NoiseBatch(RowMatrixXd samples);

  Eigen::Index size() const { return samples_.rows(); }
  Eigen::Index width() const { return samples_.cols(); }
  const RowMatrixXd& samples() const { return samples_; }
  auto row(Eigen::Index b) const { return samples_.row(b); }
  std::optional<std::uint64_t> seed() const { return seed_; }

 private:
  friend NoiseBatch sample_noise(Eigen::Index, Eigen::Index, std::uint64_t);
  NoiseBatch(RowMatrixXd samples, std::uint64_t seed);

  RowMatrixXd samples_;
  std::optional<std::uint64_t> seed_;
};

/// Draws a B x L batch from Xoshiro256(seed), filled row by row.
NoiseBatch sample_noise(Eigen::Index L, Eigen::Index B, std::uint64_t seed);

}  // namespace topk
