#pragma once

// Minibatch SGD with Nesterov momentum, weight decay and a step learning-rate
// schedule, with early stopping on a validation metric.

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "topk/dataset.hpp"
#include "topk/losses.hpp"
#include "topk/metrics.hpp"
#include "topk/model.hpp"

namespace topk {

enum class StopMetric { macro_top_k, top_k };

struct TrainConfig {
  LossSpec loss;
  /// Used to build the margin table from training counts when the loss
  /// needs margins and loss.margins is not set.
  double max_margin = 0.2;

  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  Index batch_size = 64;
  Index epochs = 30;
  std::vector<Index> lr_drop_epochs;  // strictly increasing, 0-based epoch at which the drop applies
  double lr_drop_factor = 0.1;

  Index hidden = 0;
  bool normalize = false;
  double score_scale = 1.0;
  double init_scale = 1.0;

  Index eval_k = 5;
  StopMetric stop_metric = StopMetric::macro_top_k;
  ShotThresholds shots;

  /// Draw a fresh NoiseBatch for every sample instead of one per minibatch.
  bool per_sample_noise = false;
  /// >1 shards per-sample gradients over threads; results then depend on
  /// the thread count through floating-point summation order.
  int threads = 1;
  std::uint64_t seed = 0;
};

/// Throws std::invalid_argument on nonsensical settings.
void validate(const TrainConfig& cfg);

/// Raised when a loss or gradient becomes non-finite.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(Index epoch, Index batch, const std::string& what);
  Index epoch() const { return epoch_; }
  Index batch() const { return batch_; }

 private:
  Index epoch_, batch_;
};

struct EpochRecord {
  Index epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  MetricsReport val;
};

struct TrainResult {
  Model model;  // parameters of the best validation epoch (earliest on ties)
  Index best_epoch = 0;
  double best_metric = 0.0;
  std::vector<EpochRecord> history;
};

TrainResult train(const LongTailDataset& ds, const TrainConfig& cfg);

/// Learning rate in effect during `epoch` (0-based).
double scheduled_lr(const TrainConfig& cfg, Index epoch);

/// Columns: epoch, split, lr, train_loss, top_k, macro_top_k, few, medium, many.
void write_history_csv(std::ostream& out, const std::vector<EpochRecord>& history);

}  // namespace topk
