#include "topk/train.hpp"

#include <cmath>
#include <memory>
#include <numeric>
#include <optional>
#include <ostream>
#include <thread>

#include "topk/csv.hpp"
#include "topk/noise.hpp"

namespace topk {

TrainingError::TrainingError(Index epoch, Index batch, const std::string& what)
    : std::runtime_error("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                         std::to_string(batch) + ": " + what),
      epoch_(epoch),
      batch_(batch) {}

void validate(const TrainConfig& cfg) {
  if (!(cfg.lr > 0.0)) throw std::invalid_argument("lr must be > 0");
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) throw std::invalid_argument("momentum must be in [0, 1)");
  if (!(cfg.weight_decay >= 0.0)) throw std::invalid_argument("weight_decay must be >= 0");
  if (cfg.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (cfg.epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  for (std::size_t i = 1; i < cfg.lr_drop_epochs.size(); ++i)
    if (cfg.lr_drop_epochs[i] <= cfg.lr_drop_epochs[i - 1])
      throw std::invalid_argument("lr_drop_epochs must be strictly increasing");
  if (!(cfg.lr_drop_factor > 0.0)) throw std::invalid_argument("lr_drop_factor must be > 0");
  if (cfg.eval_k < 1) throw std::invalid_argument("eval_k must be >= 1");
  if (cfg.threads < 1) throw std::invalid_argument("threads must be >= 1");
  if (!has_gradient(cfg.loss.kind))
    throw std::invalid_argument(std::string(loss_name(cfg.loss.kind)) + " cannot be trained (no gradient)");
  if (uses_noise(cfg.loss.kind) && cfg.loss.noise_samples < 1)
    throw std::invalid_argument("noise_samples must be >= 1");
}

double scheduled_lr(const TrainConfig& cfg, Index epoch) {
  double lr = cfg.lr;
  for (Index drop : cfg.lr_drop_epochs)
    if (epoch >= drop) lr *= cfg.lr_drop_factor;
  return lr;
}

namespace {

double stop_value(const MetricsReport& m, StopMetric metric) {
  return metric == StopMetric::macro_top_k ? m.macro_top_k_accuracy : m.top_k_accuracy;
}

struct Shard {
  VectorXd grad;
  double loss = 0.0;
  bool finite = true;
};

}  // namespace

TrainResult train(const LongTailDataset& ds, const TrainConfig& cfg_in) {
  validate(cfg_in);
  TrainConfig cfg = cfg_in;
  const Index L = ds.num_classes;
  if (ds.train.size() == 0 || ds.val.size() == 0) throw std::invalid_argument("train: empty train or val split");
  if (uses_margins(cfg.loss.kind) && !cfg.loss.margins)
    cfg.loss.margins = std::make_shared<const MarginTable>(MarginTable::from_max_margin(ds.train_counts, cfg.max_margin));

  ModelShape shape{ds.train.features.cols(), L, cfg.hidden, cfg.normalize, cfg.score_scale};
  Model model(shape, derive_seed(cfg.seed, 0), cfg.init_scale);
  VectorXd velocity = VectorXd::Zero(model.parameters().size());

  Xoshiro256 order_rng(derive_seed(cfg.seed, 1));
  Xoshiro256 noise_rng(derive_seed(cfg.seed, 2));
  std::vector<Index> order(static_cast<std::size_t>(ds.train.size()));
  std::iota(order.begin(), order.end(), Index{0});

  const bool noised = uses_noise(cfg.loss.kind);
  const int threads = cfg.threads;
  std::vector<Shard> shards(static_cast<std::size_t>(threads));

  TrainResult result{model, -1, -1.0, {}};
  for (Index epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = scheduled_lr(cfg, epoch);
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(order_rng.below(i))]);

    double epoch_loss = 0.0;
    Index batch = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size), ++batch) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const std::size_t n = end - start;

      std::optional<NoiseBatch> shared_noise;
      std::vector<std::uint64_t> sample_seeds;
      if (noised) {
        if (cfg.per_sample_noise) {
          sample_seeds.resize(n);
          for (auto& s : sample_seeds) s = noise_rng();
        } else {
          shared_noise = sample_noise(L, cfg.loss.noise_samples, noise_rng());
        }
      }

      auto work = [&](std::size_t shard_id) {
        Shard& shard = shards[shard_id];
        shard.grad = VectorXd::Zero(model.parameters().size());
        shard.loss = 0.0;
        shard.finite = true;
        const std::size_t lo = n * shard_id / static_cast<std::size_t>(threads);
        const std::size_t hi = n * (shard_id + 1) / static_cast<std::size_t>(threads);
        for (std::size_t i = lo; i < hi; ++i) {
          const Index row = order[start + i];
          const auto x = ds.train.features.row(row).transpose();
          const Index y = ds.train.labels[static_cast<std::size_t>(row)];
          const Model::Trace trace = model.forward(x);
          if (!trace.scores.allFinite()) {
            shard.finite = false;
            return;
          }
          std::optional<NoiseBatch> own_noise;
          if (noised && cfg.per_sample_noise) own_noise = sample_noise(L, cfg.loss.noise_samples, sample_seeds[i]);
          const NoiseBatch* z = own_noise ? &*own_noise : (shared_noise ? &*shared_noise : nullptr);
          const LossEval eval = evaluate_loss(cfg.loss, trace.scores, y, z);
          if (!std::isfinite(eval.value) || !eval.grad.allFinite()) {
            shard.finite = false;
            return;
          }
          shard.loss += eval.value;
          model.backward(x, trace, eval.grad, shard.grad);
        }
      };

      if (threads == 1) {
        work(0);
      } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(work, static_cast<std::size_t>(t));
        for (auto& th : pool) th.join();
      }

      VectorXd grad = VectorXd::Zero(model.parameters().size());
      double batch_loss = 0.0;
      for (const auto& shard : shards) {
        if (!shard.finite) throw TrainingError(epoch, batch, "non-finite loss or scores");
        grad += shard.grad;
        batch_loss += shard.loss;
      }
      grad /= static_cast<double>(n);
      epoch_loss += batch_loss;

      VectorXd& theta = model.parameters();
      grad += cfg.weight_decay * theta;
      velocity = cfg.momentum * velocity + grad;
      theta -= lr * (grad + cfg.momentum * velocity);
      if (!theta.allFinite()) throw TrainingError(epoch, batch, "non-finite parameters");
    }

    EpochRecord record;
    record.epoch = epoch;
    record.lr = lr;
    record.train_loss = epoch_loss / static_cast<double>(order.size());
    record.val = evaluate(model, ds.val, cfg.eval_k, ds.train_counts, cfg.shots);
    const double metric = stop_value(record.val, cfg.stop_metric);
    if (metric > result.best_metric) {
      result.best_metric = metric;
      result.best_epoch = epoch;
      result.model = model;
    }
    result.history.push_back(std::move(record));
  }
  return result;
}

void write_history_csv(std::ostream& out, const std::vector<EpochRecord>& history) {
  CsvWriter csv(out);
  csv.header({"epoch", "split", "lr", "train_loss", "top_k", "macro_top_k", "few", "medium", "many"});
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  for (const auto& r : history) {
    csv.row({std::to_string(r.epoch), "val", format_double(r.lr), format_double(r.train_loss),
             format_double(r.val.top_k_accuracy), format_double(r.val.macro_top_k_accuracy),
             opt(r.val.few_shot), opt(r.val.medium_shot), opt(r.val.many_shot)});
  }
}

}  // namespace topk
