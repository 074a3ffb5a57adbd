#include "topk/noise.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <utility>

namespace topk {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Xoshiro256::Xoshiro256(std::uint64_t seed) {
  for (auto& word : s_) word = splitmix64(seed);
}

Xoshiro256::result_type Xoshiro256::operator()() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Xoshiro256::uniform() {
  // (k + 0.5) / 2^53 never hits 0 or 1.
  return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
}

std::uint64_t Xoshiro256::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("Xoshiro256::below: n must be positive");
  // Lemire's rejection keeps the draw unbiased.
  const std::uint64_t threshold = (~n + 1) % n;
  while (true) {
    const unsigned __int128 m = static_cast<unsigned __int128>((*this)()) * n;
    if (static_cast<std::uint64_t>(m) >= threshold) return static_cast<std::uint64_t>(m >> 64);
  }
}

double Xoshiro256::normal() {
  if (spare_) {
    const double z = *spare_;
    spare_.reset();
    return z;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  return r * std::cos(theta);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t x = seed ^ (stream * 0xd1b54a32d192ed03ULL);
  splitmix64(x);
  return splitmix64(x);
}

NoiseBatch::NoiseBatch(RowMatrixXd samples) : samples_(std::move(samples)) {
  if (samples_.rows() < 1 || samples_.cols() < 1)
    throw std::invalid_argument("NoiseBatch: need at least one sample of positive width");
}

NoiseBatch::NoiseBatch(RowMatrixXd samples, std::uint64_t seed)
    : samples_(std::move(samples)), seed_(seed) {}

NoiseBatch sample_noise(Eigen::Index L, Eigen::Index B, std::uint64_t seed) {
  if (L < 2) throw std::invalid_argument("sample_noise: L must be >= 2");
  if (B < 1) throw std::invalid_argument("sample_noise: B must be >= 1");
  Xoshiro256 rng(seed);
  RowMatrixXd z(B, L);
  for (Eigen::Index b = 0; b < B; ++b)
    for (Eigen::Index j = 0; j < L; ++j) z(b, j) = rng.normal();
  return NoiseBatch(std::move(z), seed);
}

}  // namespace topk
