#include "topk/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>

#include <boost/math/distributions/students_t.hpp>

#include "topk/noise.hpp"

namespace topk {

std::vector<SparsityRow> gradient_sparsity(Index L, Index k, const std::vector<double>& epsilons,
                                           Index noise_samples, Index samples, std::uint64_t seed) {
  if (epsilons.empty()) throw std::invalid_argument("gradient_sparsity: empty epsilon grid");
  if (samples < 1) throw std::invalid_argument("gradient_sparsity: samples must be >= 1");
  detail::check_range(k, 1, L - 1, "gradient_sparsity");

  std::vector<SparsityRow> rows;
  for (double eps : epsilons) {
    double sum = 0.0, sum_sq = 0.0;
    for (Index i = 0; i < samples; ++i) {
      Xoshiro256 rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
      VectorXd s(L);
      for (Index j = 0; j < L; ++j) s(j) = rng.normal();
      const Index y = static_cast<Index>(rng.below(static_cast<std::uint64_t>(L)));
      const NoiseBatch noise = sample_noise(L, noise_samples, rng());
      const LossEval eval = loss_noised_balanced(s, y, k, eps, noise);
      const double nnz = static_cast<double>((eval.grad.array() != 0.0).count());
      sum += nnz;
      sum_sq += nnz * nnz;
    }
    const double n = static_cast<double>(samples);
    const double mean = sum / n;
    const double var = samples > 1 ? std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0)) : 0.0;
    rows.push_back({eps, mean, std::sqrt(var)});
  }
  return rows;
}

SimplexMesh simplex_level_sets(const SimplexOptions& o) {
  if (o.mesh_steps < 1) throw std::invalid_argument("simplex: mesh_steps must be >= 1");
  if (o.label < 0 || o.label > 2) throw std::invalid_argument("simplex: label must be in [0, 2]");
  if (!has_gradient(o.spec.kind) && o.spec.kind != LossKind::topk_01)
    throw std::invalid_argument("simplex: unsupported loss");
  if (o.spec.margins && o.spec.margins->size() != 3)
    throw std::invalid_argument("simplex: margin table must have exactly 3 classes (L = 3)");
  const bool noised = uses_noise(o.spec.kind);
  const Index reps = noised ? std::max<Index>(1, o.replications) : 1;

  std::vector<NoiseBatch> batches;
  for (Index r = 0; r < reps && noised; ++r)
    batches.push_back(sample_noise(3, o.spec.noise_samples, derive_seed(o.seed, static_cast<std::uint64_t>(r))));

  SimplexMesh mesh;
  mesh.steps = o.mesh_steps;
  const double n = static_cast<double>(o.mesh_steps);
  for (Index i = 0; i <= o.mesh_steps; ++i) {
    for (Index j = 0; i + j <= o.mesh_steps; ++j) {
      SimplexPoint p;
      p.i = i;
      p.j = j;
      p.s = VectorXd(3);
      p.s << o.scale * static_cast<double>(i) / n, o.scale * static_cast<double>(j) / n,
          o.scale * static_cast<double>(o.mesh_steps - i - j) / n;
      double acc = 0.0;
      for (Index r = 0; r < reps; ++r)
        acc += evaluate_loss(o.spec, p.s, o.label, noised ? &batches[static_cast<std::size_t>(r)] : nullptr).value;
      p.raw = acc / static_cast<double>(reps);
      mesh.points.push_back(std::move(p));
    }
  }
  auto [lo, hi] = std::minmax_element(mesh.points.begin(), mesh.points.end(),
                                      [](const auto& a, const auto& b) { return a.raw < b.raw; });
  mesh.raw_min = lo->raw;
  mesh.raw_max = hi->raw;
  const double range = mesh.raw_max - mesh.raw_min;
  for (auto& p : mesh.points) p.value = range > 0.0 ? (p.raw - mesh.raw_min) / range : 0.0;
  return mesh;
}

namespace {

std::map<std::pair<Index, Index>, double> lattice_values(const SimplexMesh& mesh) {
  std::map<std::pair<Index, Index>, double> v;
  for (const auto& p : mesh.points) v[{p.i, p.j}] = p.value;
  return v;
}

constexpr std::pair<Index, Index> kDirections[3] = {{1, 0}, {0, 1}, {1, -1}};

}  // namespace

double mesh_roughness(const SimplexMesh& mesh) {
  const auto v = lattice_values(mesh);
  double worst = 0.0;
  for (const auto& [key, value] : v) {
    for (const auto& [di, dj] : kDirections) {
      const auto it = v.find({key.first + di, key.second + dj});
      if (it != v.end()) worst = std::max(worst, std::abs(it->second - value));
    }
  }
  return worst;
}

double mesh_curvature(const SimplexMesh& mesh) {
  const auto v = lattice_values(mesh);
  double worst = 0.0;
  for (const auto& [key, value] : v) {
    for (const auto& [di, dj] : kDirections) {
      const auto a = v.find({key.first - di, key.second - dj});
      const auto b = v.find({key.first + di, key.second + dj});
      if (a != v.end() && b != v.end()) worst = std::max(worst, std::abs(a->second - 2.0 * value + b->second));
    }
  }
  return worst;
}

std::vector<TimingSample> time_losses(const TimingOptions& o) {
  if (o.k_grid.empty() || o.losses.empty()) throw std::invalid_argument("timing: empty K grid or loss list");
  if (o.batch < 1 || o.repeats < 1) throw std::invalid_argument("timing: batch and repeats must be >= 1");
  for (Index k : o.k_grid) detail::check_range(k, 1, o.L - 1, "timing");

  Xoshiro256 rng(o.seed);
  Eigen::MatrixXd scores(o.batch, o.L);
  std::vector<Index> labels(static_cast<std::size_t>(o.batch));
  for (Index i = 0; i < o.batch; ++i) {
    for (Index j = 0; j < o.L; ++j) scores(i, j) = rng.normal();
    labels[static_cast<std::size_t>(i)] = static_cast<Index>(rng.below(static_cast<std::uint64_t>(o.L)));
  }

  std::vector<TimingSample> samples;
  double sink = 0.0;
  for (Index rep = -o.warmup; rep < o.repeats; ++rep) {
    for (LossKind kind : o.losses) {
      for (Index k : o.k_grid) {
        LossSpec spec;
        spec.kind = kind;
        spec.k = k;
        spec.epsilon = o.epsilon;
        spec.noise_samples = o.noise_samples;
        spec.tau = o.tau;
        const auto t0 = std::chrono::steady_clock::now();
        std::optional<NoiseBatch> noise;
        if (uses_noise(kind)) noise = sample_noise(o.L, o.noise_samples, rng());
        for (Index i = 0; i < o.batch; ++i) {
          const LossEval e = evaluate_loss(spec, scores.row(i).transpose(), labels[static_cast<std::size_t>(i)],
                                           noise ? &*noise : nullptr);
          sink += e.value + e.grad(0);
        }
        const auto t1 = std::chrono::steady_clock::now();
        if (rep >= 0) samples.push_back({k, kind, std::chrono::duration<double>(t1 - t0).count()});
      }
    }
  }
  if (!std::isfinite(sink)) throw std::runtime_error("timing: non-finite loss encountered");
  return samples;
}

std::vector<TimingRow> summarize_timing(const std::vector<TimingSample>& samples) {
  std::map<std::pair<LossKind, Index>, std::vector<double>> groups;
  std::vector<std::pair<LossKind, Index>> order;
  for (const auto& s : samples) {
    auto key = std::make_pair(s.loss, s.k);
    if (!groups.count(key)) order.push_back(key);
    groups[key].push_back(s.seconds);
  }
  std::vector<TimingRow> rows;
  for (const auto& key : order) {
    const auto& v = groups[key];
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var = v.size() > 1 ? var / static_cast<double>(v.size() - 1) : 0.0;
    rows.push_back({key.second, std::string(loss_name(key.first)), mean, std::sqrt(var)});
  }
  return rows;
}

SlopeFit fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 3) throw std::invalid_argument("fit_slope: need >= 3 paired points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) throw std::invalid_argument("fit_slope: x has no spread");
  SlopeFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double sse = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (fit.intercept + fit.slope * x[i]);
    sse += r * r;
  }
  const double se = std::sqrt(sse / (n - 2.0) / sxx);
  const boost::math::students_t dist(n - 2.0);
  const double t = boost::math::quantile(boost::math::complement(dist, 0.025));
  fit.ci_low = fit.slope - t * se;
  fit.ci_high = fit.slope + t * se;
  return fit;
}

}  // namespace topk

namespace topk {

LongTailSpec epsilon_task_spec(std::uint64_t seed) {
  LongTailSpec spec;
  spec.num_classes = 100;
  spec.dim = 32;
  spec.train_counts = decaying_counts(100, 200, 5);
  spec.class_separation = 3.0;
  spec.seed = seed;
  return spec;
}

TrainConfig epsilon_task_config(double epsilon, std::uint64_t seed) {
  TrainConfig cfg;
  cfg.loss.kind = LossKind::noised_balanced;
  cfg.loss.k = 5;
  cfg.loss.epsilon = epsilon;
  cfg.loss.noise_samples = 3;
  cfg.eval_k = 5;
  cfg.hidden = 64;
  cfg.init_scale = 0.01;
  cfg.epochs = 20;
  cfg.lr_drop_epochs = {13};
  cfg.seed = seed;
  return cfg;
}

LongTailSpec imbalance_task_spec(std::uint64_t seed) {
  LongTailSpec spec;
  spec.num_classes = 20;
  spec.dim = 16;
  spec.train_counts = decaying_counts(20, 200, 5);
  spec.class_separation = 2.0;
  spec.test_per_class = 100;
  spec.seed = seed;
  return spec;
}

TrainConfig imbalance_task_config(LossKind kind, std::uint64_t seed) {
  TrainConfig cfg;
  cfg.loss.kind = kind;
  cfg.loss.k = 1;
  cfg.loss.noise_samples = 3;
  cfg.eval_k = 1;
  cfg.normalize = true;
  cfg.epochs = 20;
  cfg.lr_drop_epochs = {13};
  cfg.seed = seed;
  return cfg;
}

TunedRun tune_on_validation(const LongTailDataset& ds, const TrainConfig& base, const TuningGrid& grid) {
  const auto axis = [](const std::vector<double>& values, bool applies, double current) {
    return applies && !values.empty() ? values : std::vector<double>{current};
  };
  const LossKind kind = base.loss.kind;
  const auto scales = axis(grid.score_scale, base.normalize, base.score_scale);
  const auto epsilons = axis(grid.epsilon, uses_noise(kind), base.loss.epsilon);
  const auto margins = axis(grid.max_margin, uses_margins(kind), base.max_margin);
  const auto taus = axis(grid.tau, kind == LossKind::smoothed_hinge, base.loss.tau);
  const auto gammas = axis(grid.gamma, kind == LossKind::focal, base.loss.gamma);

  std::optional<TunedRun> best;
  Index candidates = 0;
  for (double scale : scales)
    for (double eps : epsilons)
      for (double margin : margins)
        for (double tau : taus)
          for (double gamma : gammas) {
            TrainConfig cfg = base;
            cfg.score_scale = scale;
            cfg.loss.epsilon = eps;
            cfg.max_margin = margin;
            cfg.loss.margins.reset();
            cfg.loss.tau = tau;
            cfg.loss.gamma = gamma;
            ++candidates;
            TrainResult r = train(ds, cfg);
            if (!best || r.best_metric > best->result.best_metric) best = TunedRun{cfg, std::move(r), {}, 0};
          }
  best->test = evaluate(best->result.model, ds.test, best->config.eval_k, ds.train_counts, best->config.shots);
  best->candidates = candidates;
  return std::move(*best);
}

}  // namespace topk
