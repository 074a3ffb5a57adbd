#pragma once

// Synthetic long-tailed classification data standing in for image datasets:
// class-conditional Gaussian features, exact per-class training counts, an
// optional superclass grouping used for label noise.

#include <cstdint>
#include <iosfwd>
#include <vector>

#include <Eigen/Core>

#include "topk/score_core.hpp"

namespace topk {

struct LongTailSpec {
  Index num_classes = 10;
  Index dim = 16;
  std::vector<std::int64_t> train_counts;  // one entry per class, all >= 1
  std::int64_t val_per_class = 20;
  std::int64_t test_per_class = 20;
  /// superclasses[c] is the group of class c; empty means one group per class.
  std::vector<Index> superclasses;
  /// Norm of every class mean.
  double class_separation = 3.0;
  /// Pull of class mean directions towards their superclass centre
  /// (0: independent directions).
  double superclass_spread = 0.0;
  double feature_noise = 1.0;
  std::uint64_t seed = 0;
};

struct Split {
  Eigen::MatrixXd features;  // one sample per row
  std::vector<Index> labels;

  Index size() const { return static_cast<Index>(labels.size()); }
};

struct LongTailDataset {
  Index num_classes = 0;
  Split train, val, test;
  std::vector<std::int64_t> train_counts;
  std::vector<Index> superclasses;
};

/// Geometric decay from `largest` (class 0) down to `smallest` (last class).
std::vector<std::int64_t> decaying_counts(Index num_classes, std::int64_t largest,
                                          std::int64_t smallest);

/// Groups of `group_size` consecutive classes.
std::vector<Index> contiguous_superclasses(Index num_classes, Index group_size);

/// Deterministic in spec.seed. Throws std::invalid_argument on inconsistent
/// specs or when the feature matrices would exceed ~1.6 GB.
LongTailDataset generate_longtail(const LongTailSpec& spec);

/// Returns a copy where each training label is, with probability p, redrawn
/// uniformly within its superclass (possibly the same label). Validation and
/// test splits are untouched.
LongTailDataset apply_superclass_noise(const LongTailDataset& ds, double p, std::uint64_t seed);

/// CSV with columns label, x0 .. x{d-1}; one sample per row.
void write_split_csv(std::ostream& out, const Split& split);
Split read_split_csv(std::istream& in);

}  // namespace topk
