// topk_cli: desk-scale experiments for noised top-K losses, CSV out.
//
// Exit codes: 0 success, 1 usage error, 2 tolerance or run failure.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "topk/calibration.hpp"
#include "topk/csv.hpp"
#include "topk/experiments.hpp"
#include "topk/gradcheck.hpp"
#include "topk/train.hpp"
#include "topk/version.hpp"

namespace {

using topk::Index;
using topk::LossKind;

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kFailure = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// --- output ------------------------------------------------------------------

class Output {
 public:
  explicit Output(const std::string& path) {
    if (path.empty() || path == "-") return;
    file_.open(path);
    if (!file_) throw UsageError("cannot open output file '" + path + "'");
  }
  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

/// Comment lines with the version, the subcommand and every resolved option.
void write_provenance(topk::CsvWriter& csv, const CLI::App& cmd) {
  csv.comment("topk " + std::string(topk::kVersion));
  csv.comment("command=" + cmd.get_name());
  std::istringstream lines(cmd.config_to_str(true, false));
  for (std::string line; std::getline(lines, line);)
    if (!line.empty() && line.front() != '[') csv.comment(line);
}

// --- config file ---------------------------------------------------------------

/// Rewrites `--config FILE` into `--key=value` arguments placed right after
/// the subcommand, ahead of the user's own flags, so flags win.
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i + 2));
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
      break;
    }
  }
  if (path.empty()) return args;

  std::vector<std::string> injected;
  for (const auto& item : CLI::ConfigTOML().from_file(path)) {
    if (item.name.empty() || item.name == "++" || item.name == "--") continue;
    std::string key = item.name;
    std::replace(key.begin(), key.end(), '_', '-');
    injected.push_back("--" + key + "=" + CLI::detail::join(item.inputs, ","));
  }
  const auto sub = std::find_if(args.begin(), args.end(), [](const std::string& a) { return a.rfind("-", 0) != 0; });
  if (sub == args.end()) throw UsageError("--config needs a subcommand");
  args.insert(sub + 1, injected.begin(), injected.end());
  return args;
}

// --- shared option groups ------------------------------------------------------

struct LossOptions {
  std::string loss = "noised_balanced";
  Index k = 1;
  double epsilon = 0.1;
  Index noise_samples = 3;
  double tau = 1.0;
  double gamma = 2.0;
  bool focal_table_literal = false;
  double max_margin = 0.2;
  std::vector<std::int64_t> counts;  // per-class counts for margins; empty -> decaying 200..5
};

void add_loss_options(CLI::App* cmd, LossOptions& o) {
  cmd->add_option("--loss", o.loss, "Loss name")
      ->check(CLI::IsMember([] {
        std::vector<std::string> names;
        for (LossKind k : topk::all_loss_kinds()) names.emplace_back(topk::loss_name(k));
        return names;
      }()))
      ->capture_default_str();
  cmd->add_option("--K", o.k, "K of the top-K loss")->capture_default_str();
  cmd->add_option("--epsilon", o.epsilon, "Noise scale of the noised losses")->capture_default_str();
  cmd->add_option("--B", o.noise_samples, "Noise vectors per evaluation")->capture_default_str();
  cmd->add_option("--tau", o.tau, "Temperature of the smoothed hinge")->capture_default_str();
  cmd->add_option("--gamma", o.gamma, "Focal exponent")->capture_default_str();
  cmd->add_flag("--focal-table-literal", o.focal_table_literal, "Use the literal table form of the focal loss");
  cmd->add_option("--max-margin", o.max_margin, "Largest class margin (rarest class)")->capture_default_str();
  cmd->add_option("--counts", o.counts, "Per-class train counts for margins")->delimiter(',');
}

topk::LossSpec make_spec(const LossOptions& o, Index L) {
  topk::LossSpec spec;
  spec.kind = topk::parse_loss_kind(o.loss);
  spec.k = o.k;
  spec.epsilon = o.epsilon;
  spec.noise_samples = o.noise_samples;
  spec.tau = o.tau;
  spec.gamma = o.gamma;
  spec.focal_form = o.focal_table_literal ? topk::FocalForm::table_literal : topk::FocalForm::standard;
  if (topk::uses_margins(spec.kind)) {
    auto counts = o.counts.empty() ? topk::decaying_counts(L, 200, 5) : o.counts;
    if (static_cast<Index>(counts.size()) != L)
      throw UsageError("--counts has " + std::to_string(counts.size()) + " entries, expected " + std::to_string(L));
    spec.margins = std::make_shared<const topk::MarginTable>(topk::MarginTable::from_max_margin(counts, o.max_margin));
  }
  return spec;
}

struct DataOptions {
  Index classes = 20;
  Index dim = 16;
  std::vector<std::int64_t> counts;
  std::int64_t largest = 200, smallest = 5;
  std::int64_t val_per_class = 20, test_per_class = 20;
  double separation = 3.0;
  double spread = 0.0;
  double feature_noise = 1.0;
  Index superclass_size = 0;
  double label_noise = 0.0;
  std::uint64_t data_seed = 0;
  std::string train_csv, val_csv, test_csv;
  std::string export_prefix;
};

void add_data_options(CLI::App* cmd, DataOptions& o) {
  cmd->add_option("--classes", o.classes, "Number of classes (synthetic data)")->capture_default_str();
  cmd->add_option("--dim", o.dim, "Feature dimension (synthetic data)")->capture_default_str();
  cmd->add_option("--train-counts", o.counts, "Explicit per-class train counts")->delimiter(',');
  cmd->add_option("--largest", o.largest, "Largest class count when decaying")->capture_default_str();
  cmd->add_option("--smallest", o.smallest, "Smallest class count when decaying")->capture_default_str();
  cmd->add_option("--val-per-class", o.val_per_class)->capture_default_str();
  cmd->add_option("--test-per-class", o.test_per_class)->capture_default_str();
  cmd->add_option("--separation", o.separation, "Norm of the class means")->capture_default_str();
  cmd->add_option("--spread", o.spread, "Pull of class means toward their superclass centre")->capture_default_str();
  cmd->add_option("--feature-noise", o.feature_noise, "Within-class standard deviation")->capture_default_str();
  cmd->add_option("--superclass-size", o.superclass_size, "Contiguous superclass size (0: none)")
      ->capture_default_str();
  cmd->add_option("--label-noise", o.label_noise, "Probability of resampling a train label in its superclass")
      ->capture_default_str();
  cmd->add_option("--data-seed", o.data_seed)->capture_default_str();
  cmd->add_option("--train-csv", o.train_csv, "Load the train split instead of generating");
  cmd->add_option("--val-csv", o.val_csv, "Load the validation split");
  cmd->add_option("--test-csv", o.test_csv, "Load the test split");
  cmd->add_option("--export-data", o.export_prefix, "Write PREFIX_{train,val,test}.csv");
}

topk::Split read_split(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open '" + path + "'");
  return topk::read_split_csv(in);
}

topk::LongTailDataset make_dataset(const DataOptions& o) {
  topk::LongTailDataset ds;
  if (!o.train_csv.empty()) {
    if (o.val_csv.empty() || o.test_csv.empty()) throw UsageError("--train-csv needs --val-csv and --test-csv");
    ds.train = read_split(o.train_csv);
    ds.val = read_split(o.val_csv);
    ds.test = read_split(o.test_csv);
    Index L = 0;
    for (const auto* s : {&ds.train, &ds.val, &ds.test})
      for (Index y : s->labels) L = std::max(L, y + 1);
    ds.num_classes = L;
    ds.train_counts.assign(static_cast<std::size_t>(L), 0);
    for (Index y : ds.train.labels) ++ds.train_counts[static_cast<std::size_t>(y)];
    for (auto& c : ds.train_counts) c = std::max<std::int64_t>(c, 1);
  } else {
    topk::LongTailSpec spec;
    spec.num_classes = o.classes;
    spec.dim = o.dim;
    spec.train_counts = o.counts.empty() ? topk::decaying_counts(o.classes, o.largest, o.smallest) : o.counts;
    spec.val_per_class = o.val_per_class;
    spec.test_per_class = o.test_per_class;
    spec.class_separation = o.separation;
    spec.superclass_spread = o.spread;
    spec.feature_noise = o.feature_noise;
    if (o.superclass_size > 0) spec.superclasses = topk::contiguous_superclasses(o.classes, o.superclass_size);
    spec.seed = o.data_seed;
    ds = topk::generate_longtail(spec);
  }
  if (o.label_noise > 0.0) {
    if (ds.superclasses.empty()) throw UsageError("--label-noise needs --superclass-size");
    ds = topk::apply_superclass_noise(ds, o.label_noise, topk::derive_seed(o.data_seed, 99));
  }
  if (!o.export_prefix.empty()) {
    for (auto [name, split] : {std::pair{"train", &ds.train}, {"val", &ds.val}, {"test", &ds.test}}) {
      std::ofstream out(o.export_prefix + "_" + name + ".csv");
      if (!out) throw UsageError("cannot write '" + o.export_prefix + "_" + name + ".csv'");
      topk::write_split_csv(out, *split);
    }
  }
  return ds;
}

struct TrainOptions {
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  Index batch_size = 64;
  Index epochs = 30;
  std::vector<Index> lr_drops;
  double lr_drop_factor = 0.1;
  Index hidden = 0;
  bool normalize = false;
  double score_scale = 1.0;
  double init_scale = 1.0;
  Index eval_k = 5;
  std::string stop_metric = "macro_top_k";
  bool per_sample_noise = false;
  int threads = 1;
  std::uint64_t seed = 0;
};

void add_train_options(CLI::App* cmd, TrainOptions& o) {
  cmd->add_option("--lr", o.lr)->capture_default_str();
  cmd->add_option("--momentum", o.momentum, "Nesterov momentum")->capture_default_str();
  cmd->add_option("--weight-decay", o.weight_decay)->capture_default_str();
  cmd->add_option("--batch-size", o.batch_size)->capture_default_str();
  cmd->add_option("--epochs", o.epochs)->capture_default_str();
  cmd->add_option("--lr-drops", o.lr_drops, "Epochs (0-based) where the rate is multiplied by the factor")
      ->delimiter(',');
  cmd->add_option("--lr-drop-factor", o.lr_drop_factor)->capture_default_str();
  cmd->add_option("--hidden", o.hidden, "Hidden ReLU units (0: linear)")->capture_default_str();
  cmd->add_flag("--normalize", o.normalize, "Unit-normalize features and class weights, then scale");
  cmd->add_option("--score-scale", o.score_scale)->capture_default_str();
  cmd->add_option("--init-scale", o.init_scale, "Weight init standard deviation times sqrt(fan_in)")
      ->capture_default_str();
  cmd->add_option("--eval-k", o.eval_k, "K of the reported top-K metrics")->capture_default_str();
  cmd->add_option("--stop-metric", o.stop_metric)
      ->check(CLI::IsMember({"macro_top_k", "top_k"}))
      ->capture_default_str();
  cmd->add_flag("--per-sample-noise", o.per_sample_noise, "Fresh noise per sample instead of per minibatch");
  cmd->add_option("--threads", o.threads, "Data-parallel shards (1: bit-exact)")->capture_default_str();
  cmd->add_option("--seed", o.seed)->capture_default_str();
}

topk::TrainConfig make_config(const TrainOptions& t, const LossOptions& l, Index L) {
  topk::TrainConfig cfg;
  cfg.loss = make_spec(l, L);
  cfg.loss.margins.reset();  // the trainer derives margins from the train counts
  cfg.max_margin = l.max_margin;
  cfg.lr = t.lr;
  cfg.momentum = t.momentum;
  cfg.weight_decay = t.weight_decay;
  cfg.batch_size = t.batch_size;
  cfg.epochs = t.epochs;
  cfg.lr_drop_epochs = t.lr_drops;
  cfg.lr_drop_factor = t.lr_drop_factor;
  cfg.hidden = t.hidden;
  cfg.normalize = t.normalize;
  cfg.score_scale = t.score_scale;
  cfg.init_scale = t.init_scale;
  cfg.eval_k = t.eval_k;
  cfg.stop_metric = t.stop_metric == "top_k" ? topk::StopMetric::top_k : topk::StopMetric::macro_top_k;
  cfg.per_sample_noise = t.per_sample_noise;
  cfg.threads = t.threads;
  cfg.seed = t.seed;
  return cfg;
}

std::string opt(const std::optional<double>& v) { return v ? topk::format_double(*v) : std::string(); }

std::vector<std::string> metric_fields(const topk::MetricsReport& m) {
  return {std::to_string(m.k), topk::format_double(m.top_k_accuracy), topk::format_double(m.macro_top_k_accuracy),
          opt(m.few_shot), opt(m.medium_shot), opt(m.many_shot)};
}

// --- subcommands ---------------------------------------------------------------

struct GradcheckCmd {
  LossOptions loss;
  Index L = 10;
  Index trials = 100;
  double scale = 1.0;
  double tolerance = 1e-4;
  double kink_margin = 1e-6;
  double step = 0.0;
  std::uint64_t seed = 0;
  std::string out;

  void attach(CLI::App* cmd) {
    add_loss_options(cmd, loss);
    cmd->add_option("--L", L, "Number of classes")->capture_default_str();
    cmd->add_option("--trials", trials)->capture_default_str();
    cmd->add_option("--score-scale", scale, "Standard deviation of the random scores")->capture_default_str();
    cmd->add_option("--tolerance", tolerance)->capture_default_str();
    cmd->add_option("--kink-margin", kink_margin, "Minimum distance to ties and hinge kinks")->capture_default_str();
    cmd->add_option("--step", step, "Central-difference step (0: per-loss default)")->capture_default_str();
    cmd->add_option("--seed", seed)->capture_default_str();
    cmd->add_option("--out", out, "Output CSV (default stdout)");
    cmd->footer("CSV columns: trial,label,value,max_abs_error,kink_distance,resamples,passed\n"
                "Exits 2 if any trial exceeds the tolerance.");
  }

  int run(const CLI::App& cmd) {
    topk::GradcheckOptions o;
    o.spec = make_spec(loss, L);
    if (!topk::has_gradient(o.spec.kind)) throw UsageError(loss.loss + " has no gradient to check");
    o.L = L;
    o.trials = trials;
    o.seed = seed;
    o.score_scale = scale;
    o.kink_margin = kink_margin;
    o.step = step;
    o.tolerance = tolerance;
    const auto rows = topk::run_gradcheck(o);
    Output output(out);
    topk::CsvWriter csv(output.stream());
    write_provenance(csv, cmd);
    csv.header({"trial", "label", "value", "max_abs_error", "kink_distance", "resamples", "passed"});
    bool ok = true;
    for (const auto& r : rows) {
      ok &= r.passed;
      csv.row({std::to_string(r.trial), std::to_string(r.label), topk::format_double(r.value),
               topk::format_double(r.max_abs_error), topk::format_double(r.kink_distance),
               std::to_string(r.resamples), r.passed ? "1" : "0"});
    }
    return ok ? kOk : kFailure;
  }
};

struct SparsityCmd {
  Index L = 100, k = 5, noise_samples = 3, samples = 1000;
  std::vector<double> grid{0.0, 1e-3, 1e-2, 1e-1, 1.0, 10.0};
  std::uint64_t seed = 0;
  std::string out;

  void attach(CLI::App* cmd) {
    cmd->add_option("--L", L)->capture_default_str();
    cmd->add_option("--K", k)->capture_default_str();
    cmd->add_option("--epsilon-grid", grid)->delimiter(',')->capture_default_str();
    cmd->add_option("--B", noise_samples)->capture_default_str();
    cmd->add_option("--samples", samples, "Random score vectors per epsilon")->capture_default_str();
    cmd->add_option("--seed", seed)->capture_default_str();
    cmd->add_option("--out", out);
    cmd->footer("CSV columns: epsilon,mean_nnz,std_nnz (noised balanced gradient, standard-normal scores)");
  }

  int run(const CLI::App& cmd) {
    const auto rows = topk::gradient_sparsity(L, k, grid, noise_samples, samples, seed);
    Output output(out);
    topk::CsvWriter csv(output.stream());
    write_provenance(csv, cmd);
    csv.header({"epsilon", "mean_nnz", "std_nnz"});
    for (const auto& r : rows)
      csv.row({topk::format_double(r.epsilon), topk::format_double(r.mean_nnz), topk::format_double(r.std_nnz)});
    return kOk;
  }
};

struct SimplexCmd {
  LossOptions loss;
  Index L = 3;
  Index label = 2;
  Index mesh_steps = 60;
  Index replications = 100;
  double scale = 2.0;
  std::uint64_t seed = 0;
  std::string out;

  void attach(CLI::App* cmd) {
    add_loss_options(cmd, loss);
    cmd->add_option("--L", L, "Must be 3")->capture_default_str();
    cmd->add_option("--label", label, "True class (0-based)")->capture_default_str();
    cmd->add_option("--mesh-steps", mesh_steps)->capture_default_str();
    cmd->add_option("--replications", replications, "Noise batches averaged for noised losses")
        ->capture_default_str();
    cmd->add_option("--scale", scale, "Mesh covers scale times the probability simplex")->capture_default_str();
    cmd->add_option("--seed", seed)->capture_default_str();
    cmd->add_option("--out", out);
    cmd->footer("CSV columns: s1,s2,s3,raw,value (value is raw min-max rescaled to [0,1])");
  }

  int run(const CLI::App& cmd) {
    if (L != 3) throw UsageError("simplex only supports L = 3");
    topk::SimplexOptions o;
    o.spec = make_spec(loss, 3);
    o.label = label;
    o.mesh_steps = mesh_steps;
    o.replications = replications;
    o.scale = scale;
    o.seed = seed;
    const auto mesh = topk::simplex_level_sets(o);
    Output output(out);
    topk::CsvWriter csv(output.stream());
    write_provenance(csv, cmd);
    csv.comment("roughness=" + topk::format_double(topk::mesh_roughness(mesh)));
    csv.comment("curvature=" + topk::format_double(topk::mesh_curvature(mesh)));
    csv.header({"s1", "s2", "s3", "raw", "value"});
    for (const auto& p : mesh.points)
      csv.row({topk::format_double(p.s(0)), topk::format_double(p.s(1)), topk::format_double(p.s(2)),
               topk::format_double(p.raw), topk::format_double(p.value)});
    return kOk;
  }
};

struct TimingCmd {
  topk::TimingOptions o;
  std::vector<std::string> losses{"noised_balanced", "smoothed_hinge", "ce"};
  std::string out;

  void attach(CLI::App* cmd) {
    cmd->add_option("--K-grid", o.k_grid)->delimiter(',')->capture_default_str();
    cmd->add_option("--L", o.L)->capture_default_str();
    cmd->add_option("--B", o.noise_samples)->capture_default_str();
    cmd->add_option("--batch", o.batch, "Score vectors per timed batch")->capture_default_str();
    cmd->add_option("--repeats", o.repeats)->capture_default_str();
    cmd->add_option("--warmup", o.warmup, "Untimed repeats")->capture_default_str();
    cmd->add_option("--epsilon", o.epsilon)->capture_default_str();
    cmd->add_option("--tau", o.tau)->capture_default_str();
    cmd->add_option("--losses", losses)->delimiter(',')->capture_default_str();
    cmd->add_option("--seed", o.seed)->capture_default_str();
    cmd->add_option("--out", out);
    cmd->footer("CSV columns: K,loss,mean_seconds,std_seconds (one batch: value and gradient)\n"
                "Trailing comments give the fitted slope of time against K with a 95% interval.");
  }

  int run(const CLI::App& cmd) {
    o.losses.clear();
    for (const auto& name : losses) o.losses.push_back(topk::parse_loss_kind(name));
    const auto samples = topk::time_losses(o);
    Output output(out);
    topk::CsvWriter csv(output.stream());
    write_provenance(csv, cmd);
    csv.header({"K", "loss", "mean_seconds", "std_seconds"});
    for (const auto& r : topk::summarize_timing(samples))
      csv.row({std::to_string(r.k), r.loss, topk::format_double(r.mean_seconds), topk::format_double(r.std_seconds)});
    if (o.k_grid.size() >= 2) {
      for (LossKind kind : o.losses) {
        std::vector<double> x, y;
        for (const auto& s : samples)
          if (s.loss == kind) {
            x.push_back(static_cast<double>(s.k));
            y.push_back(s.seconds);
          }
        const auto fit = topk::fit_slope(x, y);
        csv.comment("slope " + std::string(topk::loss_name(kind)) + "=" + topk::format_double(fit.slope) + " ci=[" +
                    topk::format_double(fit.ci_low) + "," + topk::format_double(fit.ci_high) + "]");
      }
    }
    return kOk;
  }
};

struct TrainCmd {
  LossOptions loss;
  DataOptions data;
  TrainOptions train;
  std::string out, checkpoint;

  void attach(CLI::App* cmd) {
    add_loss_options(cmd, loss);
    add_data_options(cmd, data);
    add_train_options(cmd, train);
    cmd->add_option("--out", out, "History CSV (default stdout)");
    cmd->add_option("--checkpoint", checkpoint, "Write the early-stopped model here");
    cmd->footer("CSV columns: epoch,split,lr,train_loss,top_k,macro_top_k,few,medium,many\n"
                "Validation rows per epoch, then one test row for the early-stopped model (epoch = best epoch).");
  }

  int run(const CLI::App& cmd) {
    const auto ds = make_dataset(data);
    const auto cfg = make_config(train, loss, ds.num_classes);
    const auto result = topk::train(ds, cfg);
    if (!checkpoint.empty()) {
      std::ofstream ck(checkpoint);
      if (!ck) throw UsageError("cannot write '" + checkpoint + "'");
      topk::save_model(ck, result.model);
    }
    const auto test = topk::evaluate(result.model, ds.test, cfg.eval_k, ds.train_counts, cfg.shots);
    Output output(out);
    topk::CsvWriter csv(output.stream());
    write_provenance(csv, cmd);
    csv.comment("best_epoch=" + std::to_string(result.best_epoch));
    csv.header({"epoch", "split", "lr", "train_loss", "top_k", "macro_top_k", "few", "medium", "many"});
    for (const auto& r : result.history) {
      const auto m = metric_fields(r.val);
      csv.row({std::to_string(r.epoch), "val", topk::format_double(r.lr), topk::format_double(r.train_loss), m[1], m[2],
               m[3], m[4], m[5]});
    }
    const auto m = metric_fields(test);
    csv.row({std::to_string(result.best_epoch), "test", "", "", m[1], m[2], m[3], m[4], m[5]});
    return kOk;
  }
};

struct EvalCmd {
  DataOptions data;
  std::string checkpoint, out;
  Index k = 5;
  bool per_class = false;

  void attach(CLI::App* cmd) {
    add_data_options(cmd, data);
    cmd->add_option("--checkpoint", checkpoint, "Model written by train")->required();
    cmd->add_option("--eval-k", k)->capture_default_str();
    cmd->add_flag("--per-class", per_class, "Add one row per class and split");
    cmd->add_option("--out", out);
    cmd->footer("CSV columns: split,class,K,top_k,macro_top_k,few,medium,many\n"
                "class is empty on summary rows; per-class rows fill top_k only.");
  }

  int run(const CLI::App& cmd) {
    std::ifstream in(checkpoint);
    if (!in) throw UsageError("cannot open checkpoint '" + checkpoint + "'");
    const auto model = topk::load_model(in);
    const auto ds = make_dataset(data);
    if (model.shape().num_classes != ds.num_classes || model.shape().input_dim != ds.train.features.cols())
      throw UsageError("checkpoint shape does not match the dataset");
    Output output(out);
    topk::CsvWriter csv(output.stream());
    write_provenance(csv, cmd);
    csv.header({"split", "class", "K", "top_k", "macro_top_k", "few", "medium", "many"});
    for (auto [name, split] : {std::pair{"train", &ds.train}, {"val", &ds.val}, {"test", &ds.test}}) {
      const auto m = topk::evaluate(model, *split, k, ds.train_counts);
      const auto f = metric_fields(m);
      csv.row({name, "", f[0], f[1], f[2], f[3], f[4], f[5]});
      if (!per_class) continue;
      for (std::size_t c = 0; c < m.per_class.size(); ++c)
        if (m.per_class_count[c] > 0)
          csv.row({name, std::to_string(c), f[0], topk::format_double(m.per_class[c]), "", "", "", ""});
    }
    return kOk;
  }
};

struct ProbeCmd {
  std::string loss = "ce";
  Index L = 3, k = 1;
  std::vector<double> pi;
  Index search_steps = 20;
  double radius = 3.0;
  Index steps = 61;
  double epsilon = 0.1, tau = 1.0, gamma = 2.0;
  Index noise_samples = 3;
  std::uint64_t seed = 0;
  std::string out;

  void attach(CLI::App* cmd) {
    cmd->add_option("--loss", loss)->capture_default_str();
    cmd->add_option("--L", L, "2 to 4")->capture_default_str();
    cmd->add_option("--K", k)->capture_default_str();
    cmd->add_option("--pi", pi, "Conditional distribution; omit to search a simplex grid")->delimiter(',');
    cmd->add_option("--search-steps", search_steps, "Simplex grid resolution for the search")->capture_default_str();
    cmd->add_option("--radius", radius, "Score grid covers [-radius, radius]^L")->capture_default_str();
    cmd->add_option("--steps", steps, "Score grid points per axis")->capture_default_str();
    cmd->add_option("--epsilon", epsilon)->capture_default_str();
    cmd->add_option("--B", noise_samples)->capture_default_str();
    cmd->add_option("--tau", tau)->capture_default_str();
    cmd->add_option("--gamma", gamma)->capture_default_str();
    cmd->add_option("--seed", seed, "Noise seed for noised losses (one batch shared by the grid)")
        ->capture_default_str();
    cmd->add_option("--out", out);
    cmd->footer("CSV columns: loss,K,pi,unrestricted_min,restricted_min,gap (pi entries joined by ';')\n"
                "A zero gap on the grid is evidence against top-K calibration, not proof.");
  }

  int run(const CLI::App& cmd) {
    topk::LossSpec spec;
    spec.kind = topk::parse_loss_kind(loss);
    spec.k = k;
    spec.epsilon = epsilon;
    spec.noise_samples = noise_samples;
    spec.tau = tau;
    spec.gamma = gamma;
    if (topk::uses_margins(spec.kind))
      spec.margins = std::make_shared<const topk::MarginTable>(topk::MarginTable::uniform(L, 1.0));
    std::shared_ptr<const topk::NoiseBatch> noise;
    if (topk::uses_noise(spec.kind))
      noise = std::make_shared<const topk::NoiseBatch>(topk::sample_noise(L, noise_samples, seed));
    const topk::PointLoss point = [spec, noise](const topk::VectorXd& s, Index y) {
      return topk::evaluate_loss(spec, s, y, noise.get()).value;
    };
    const topk::LossGrid grid(point, L, radius, steps);
    std::vector<topk::ProbeReport> reports;
    if (pi.empty()) {
      reports = topk::search_calibration_gaps(grid, loss, k, search_steps);
    } else {
      if (static_cast<Index>(pi.size()) != L) throw UsageError("--pi needs exactly L entries");
      reports.push_back(topk::calibration_probe(grid, loss, Eigen::Map<const topk::VectorXd>(pi.data(), L), k));
    }
    Output output(out);
    write_provenance_and_reports(output.stream(), cmd, reports);
    return kOk;
  }

  static void write_provenance_and_reports(std::ostream& os, const CLI::App& cmd,
                                           const std::vector<topk::ProbeReport>& reports) {
    {
      topk::CsvWriter csv(os);
      write_provenance(csv, cmd);
    }
    topk::write_probe_csv(os, reports);
  }
};

struct SweepCmd {
  std::string recipe = "epsilon";
  std::vector<double> values;
  Index seeds = 3;
  Index epochs = 0;
  std::string out;

  void attach(CLI::App* cmd) {
    cmd->add_option("--recipe", recipe, "epsilon | label-noise | B")
        ->check(CLI::IsMember({"epsilon", "label-noise", "B"}))
        ->capture_default_str();
    cmd->add_option("--values", values, "Swept values (default depends on the recipe)")->delimiter(',');
    cmd->add_option("--seeds", seeds, "Seeds 0..n-1 per value")->capture_default_str();
    cmd->add_option("--epochs", epochs, "Override the recipe's epoch count (0: keep)")->capture_default_str();
    cmd->add_option("--out", out);
    cmd->footer(
        "Toy task: 100 classes, counts decaying 200 -> 5, noised balanced loss K = 5 on a one-hidden-layer\n"
        "scorer. label-noise adds superclasses of 5 classes and also trains cross-entropy.\n"
        "CSV columns: recipe,value,seed,loss,best_epoch,val_macro_top_k,test_top_k,test_macro_top_k,few,medium,many");
  }

  int run(const CLI::App& cmd) {
    if (values.empty()) {
      if (recipe == "epsilon") values = {0.0, 1e-3, 1e-1, 1.0};
      if (recipe == "label-noise") values = {0.0, 0.2, 0.4};
      if (recipe == "B") values = {1, 5, 10, 50};
    }
    if (seeds < 1) throw UsageError("--seeds must be >= 1");
    Output output(out);
    topk::CsvWriter csv(output.stream());
    write_provenance(csv, cmd);
    csv.header({"recipe", "value", "seed", "loss", "best_epoch", "val_macro_top_k", "test_top_k", "test_macro_top_k",
                "few", "medium", "many"});
    for (double v : values) {
      for (Index s = 0; s < seeds; ++s) {
        const auto seed = static_cast<std::uint64_t>(s);
        auto spec = topk::epsilon_task_spec(seed);
        std::vector<LossKind> kinds{LossKind::noised_balanced};
        if (recipe == "label-noise") {
          spec.superclasses = topk::contiguous_superclasses(spec.num_classes, 5);
          kinds.push_back(LossKind::ce);
        }
        auto ds = topk::generate_longtail(spec);
        if (recipe == "label-noise") ds = topk::apply_superclass_noise(ds, v, topk::derive_seed(seed, 99));
        for (LossKind kind : kinds) {
          auto cfg = topk::epsilon_task_config(recipe == "epsilon" ? v : 0.1, seed);
          cfg.loss.kind = kind;
          if (recipe == "B") {
            if (v < 1 || v != static_cast<double>(static_cast<Index>(v))) throw UsageError("B values must be integers >= 1");
            cfg.loss.noise_samples = static_cast<Index>(v);
          }
          if (epochs > 0) {
            cfg.epochs = epochs;
            cfg.lr_drop_epochs = {std::max<Index>(1, epochs * 2 / 3)};
          }
          const auto r = topk::train(ds, cfg);
          const auto test = topk::evaluate(r.model, ds.test, cfg.eval_k, ds.train_counts, cfg.shots);
          const auto f = metric_fields(test);
          csv.row({recipe, topk::format_double(v), std::to_string(s), std::string(topk::loss_name(kind)),
                   std::to_string(r.best_epoch), topk::format_double(r.best_metric), f[1], f[2], f[3], f[4], f[5]});
        }
      }
    }
    return kOk;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Noised top-K losses: gradient checks, loss surfaces, timing, calibration probes and toy training"};
  app.set_version_flag("--version", std::string(topk::kVersion));
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.add_option("--config", "Flat key=value file; command-line flags override it");

  GradcheckCmd gradcheck;
  SparsityCmd sparsity;
  SimplexCmd simplex;
  TimingCmd timing;
  TrainCmd train;
  EvalCmd eval;
  ProbeCmd probe;
  SweepCmd sweep;
  gradcheck.attach(app.add_subcommand("gradcheck", "Finite differences against analytic gradients"));
  sparsity.attach(app.add_subcommand("sparsity", "Nonzero gradient coordinates as a function of epsilon"));
  simplex.attach(app.add_subcommand("simplex", "Loss level sets on the 3-class simplex"));
  timing.attach(app.add_subcommand("timing", "Per-batch loss evaluation time as a function of K"));
  train.attach(app.add_subcommand("train", "Train a scorer on a synthetic or CSV dataset"));
  eval.attach(app.add_subcommand("eval", "Evaluate a checkpoint"));
  probe.attach(app.add_subcommand("probe", "Grid-search top-K calibration probe"));
  sweep.attach(app.add_subcommand("sweep", "Toy-task sweeps over epsilon, label noise or B"));

  try {
    auto args = expand_config(argc, argv);
    std::reverse(args.begin(), args.end());  // CLI11 consumes the vector from the back
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    const CLI::App* cmd = app.get_subcommands().front();
    const std::string name = cmd->get_name();
    if (name == "gradcheck") return gradcheck.run(*cmd);
    if (name == "sparsity") return sparsity.run(*cmd);
    if (name == "simplex") return simplex.run(*cmd);
    if (name == "timing") return timing.run(*cmd);
    if (name == "train") return train.run(*cmd);
    if (name == "eval") return eval.run(*cmd);
    if (name == "probe") return probe.run(*cmd);
    if (name == "sweep") return sweep.run(*cmd);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}
