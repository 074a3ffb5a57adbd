#pragma once

// Desk-scale experiment drivers behind the CLI subcommands. Each returns
// plain rows; the CLI turns them into CSV.

#include <cstdint>
#include <string>
#include <vector>

#include "topk/losses.hpp"
#include "topk/train.hpp"

namespace topk {

// --- gradient sparsity -------------------------------------------------------

struct SparsityRow {
  double epsilon = 0.0;
  double mean_nnz = 0.0;
  double std_nnz = 0.0;
};

/// Mean and standard deviation of the number of nonzero coordinates of the
/// noised balanced gradient on standard-normal scores with uniform labels.
/// The same scores, labels and noise are reused for every epsilon.
std::vector<SparsityRow> gradient_sparsity(Index L, Index k, const std::vector<double>& epsilons,
                                           Index noise_samples, Index samples, std::uint64_t seed);

// --- simplex level sets ------------------------------------------------------

struct SimplexOptions {
  LossSpec spec;
  Index label = 2;
  Index mesh_steps = 60;
  Index replications = 100;  // averaged over for noised losses
  double scale = 2.0;        // mesh covers scale * (probability simplex)
  std::uint64_t seed = 0;
};

struct SimplexPoint {
  Index i = 0, j = 0;  // lattice coordinates; the third is mesh_steps - i - j
  VectorXd s;
  double raw = 0.0;
  double value = 0.0;  // min-max rescaled to [0, 1]
};

struct SimplexMesh {
  Index steps = 0;
  double raw_min = 0.0, raw_max = 0.0;
  std::vector<SimplexPoint> points;
};

/// Evaluates the loss on the barycentric lattice of scale * Delta_3. Noised
/// losses draw one NoiseBatch per replication, shared by every mesh point.
SimplexMesh simplex_level_sets(const SimplexOptions& options);

/// Largest |value difference| between lattice neighbours (rescaled values).
double mesh_roughness(const SimplexMesh& mesh);

/// Largest change of the first difference along any lattice line (rescaled
/// values): a discrete curvature, large at kinks.
double mesh_curvature(const SimplexMesh& mesh);

// --- timing ------------------------------------------------------------------

struct TimingOptions {
  std::vector<Index> k_grid{1, 5, 10, 20};
  Index L = 100;
  Index noise_samples = 3;
  Index batch = 256;
  Index repeats = 30;
  Index warmup = 3;
  double epsilon = 0.2;
  double tau = 1.0;
  std::vector<LossKind> losses{LossKind::noised_balanced, LossKind::smoothed_hinge, LossKind::ce};
  std::uint64_t seed = 0;
};

struct TimingSample {
  Index k = 0;
  LossKind loss = LossKind::ce;
  double seconds = 0.0;
};

struct TimingRow {
  Index k = 0;
  std::string loss;
  double mean_seconds = 0.0;
  double std_seconds = 0.0;
};

/// Wall-clock seconds to evaluate value and gradient on one batch of
/// standard-normal scores. K values are interleaved within each repeat so
/// slow drifts in machine speed hit every K alike.
std::vector<TimingSample> time_losses(const TimingOptions& options);
std::vector<TimingRow> summarize_timing(const std::vector<TimingSample>& samples);

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double ci_low = 0.0, ci_high = 0.0;  // 95% confidence interval of the slope
};

/// Ordinary least squares of y on x with a Student-t interval for the slope.
SlopeFit fit_slope(const std::vector<double>& x, const std::vector<double>& y);

// --- toy training recipes ----------------------------------------------------

/// 100 classes, train counts decaying geometrically 200 -> 5, d = 32.
LongTailSpec epsilon_task_spec(std::uint64_t seed);

/// Noised balanced loss, K = 5, B = 3, on a one-hidden-layer ReLU scorer
/// (64 units) started near zero, 20 epochs with one drop at epoch 13.
/// Near-zero initial weights make every class score almost tied, which is
/// where the exact top-(K+1) operator starves the hidden layer.
TrainConfig epsilon_task_config(double epsilon, std::uint64_t seed);

/// 20 classes, train counts decaying geometrically 200 -> 5, d = 16,
/// separation 2, 100 test samples per class.
LongTailSpec imbalance_task_spec(std::uint64_t seed);

/// Normalized cosine scorer, K = 1, 20 epochs with one drop at epoch 13.
TrainConfig imbalance_task_config(LossKind kind, std::uint64_t seed);

/// Hyperparameter grid searched on the validation split. Empty axes leave
/// the base value alone; axes that do not apply to the loss are skipped.
struct TuningGrid {
  std::vector<double> score_scale{10, 30, 50};
  std::vector<double> epsilon{0.01, 0.05, 0.1};
  std::vector<double> max_margin{0.2, 0.3, 0.4, 0.5};
  std::vector<double> tau{0.1, 1.0};
  std::vector<double> gamma{0.5, 1.0, 2.0, 5.0};
};

struct TunedRun {
  TrainConfig config;   // winning configuration
  TrainResult result;   // its training run
  MetricsReport test;   // early-stopped model on the test split
  Index candidates = 0;
};

/// Trains every grid point and keeps the best validation stop metric (the
/// first one on ties), then scores that model on the test split.
TunedRun tune_on_validation(const LongTailDataset& ds, const TrainConfig& base, const TuningGrid& grid);

}  // namespace topk
