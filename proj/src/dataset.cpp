#include "topk/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

#include "topk/csv.hpp"
#include "topk/noise.hpp"

namespace topk {

namespace {

constexpr double kMaxFeatureEntries = 2e8;

VectorXd random_unit(Xoshiro256& rng, Index dim) {
  VectorXd v(dim);
  do {
    for (Index j = 0; j < dim; ++j) v(j) = rng.normal();
  } while (v.norm() == 0.0);
  return v.normalized();
}

Split draw_split(Xoshiro256& rng, const Eigen::MatrixXd& means, const std::vector<std::int64_t>& counts,
                 double noise) {
  std::int64_t total = 0;
  for (auto c : counts) total += c;
  Split split;
  split.features.resize(total, means.cols());
  split.labels.reserve(static_cast<std::size_t>(total));
  Index row = 0;
  for (Index c = 0; c < means.rows(); ++c) {
    for (std::int64_t i = 0; i < counts[static_cast<std::size_t>(c)]; ++i, ++row) {
      for (Index j = 0; j < means.cols(); ++j) split.features(row, j) = means(c, j) + noise * rng.normal();
      split.labels.push_back(c);
    }
  }
  return split;
}

}  // namespace

std::vector<std::int64_t> decaying_counts(Index num_classes, std::int64_t largest, std::int64_t smallest) {
  if (num_classes < 1 || smallest < 1 || largest < smallest)
    throw std::invalid_argument("decaying_counts: need num_classes >= 1 and largest >= smallest >= 1");
  std::vector<std::int64_t> counts(static_cast<std::size_t>(num_classes));
  const double ratio = num_classes > 1
                           ? std::pow(static_cast<double>(smallest) / static_cast<double>(largest),
                                      1.0 / static_cast<double>(num_classes - 1))
                           : 1.0;
  for (Index c = 0; c < num_classes; ++c)
    counts[static_cast<std::size_t>(c)] = std::max<std::int64_t>(
        smallest, std::llround(static_cast<double>(largest) * std::pow(ratio, static_cast<double>(c))));
  return counts;
}

std::vector<Index> contiguous_superclasses(Index num_classes, Index group_size) {
  if (group_size < 1) throw std::invalid_argument("group_size must be >= 1");
  std::vector<Index> groups(static_cast<std::size_t>(num_classes));
  for (Index c = 0; c < num_classes; ++c) groups[static_cast<std::size_t>(c)] = c / group_size;
  return groups;
}

LongTailDataset generate_longtail(const LongTailSpec& spec) {
  const Index L = spec.num_classes;
  if (L < 2) throw std::invalid_argument("generate_longtail: need at least 2 classes");
  if (spec.dim < 1) throw std::invalid_argument("generate_longtail: dim must be >= 1");
  if (static_cast<Index>(spec.train_counts.size()) != L)
    throw std::invalid_argument("generate_longtail: train_counts must have one entry per class");
  if (spec.val_per_class < 0 || spec.test_per_class < 0)
    throw std::invalid_argument("generate_longtail: split sizes must be >= 0");
  double total = 0.0;
  for (auto c : spec.train_counts) {
    if (c < 1) throw std::invalid_argument("generate_longtail: every class needs >= 1 training sample");
    total += static_cast<double>(c);
  }
  total += static_cast<double>(L) * static_cast<double>(spec.val_per_class + spec.test_per_class);
  if (total * static_cast<double>(spec.dim) > kMaxFeatureEntries)
    throw std::invalid_argument("generate_longtail: requested dataset too large");

  std::vector<Index> groups = spec.superclasses;
  if (groups.empty()) groups = contiguous_superclasses(L, 1);
  if (static_cast<Index>(groups.size()) != L)
    throw std::invalid_argument("generate_longtail: superclass map must cover every class");
  if (*std::min_element(groups.begin(), groups.end()) < 0)
    throw std::invalid_argument("generate_longtail: superclass ids must be >= 0");
  const Index num_groups = *std::max_element(groups.begin(), groups.end()) + 1;

  Xoshiro256 rng(spec.seed);
  Eigen::MatrixXd centres(num_groups, spec.dim);
  for (Index g = 0; g < num_groups; ++g) centres.row(g) = random_unit(rng, spec.dim).transpose();
  Eigen::MatrixXd means(L, spec.dim);
  for (Index c = 0; c < L; ++c) {
    VectorXd dir = random_unit(rng, spec.dim) +
                   spec.superclass_spread * centres.row(groups[static_cast<std::size_t>(c)]).transpose();
    if (dir.norm() == 0.0) dir = centres.row(groups[static_cast<std::size_t>(c)]).transpose();
    means.row(c) = spec.class_separation * dir.normalized().transpose();
  }

  LongTailDataset ds;
  ds.num_classes = L;
  ds.train_counts = spec.train_counts;
  ds.superclasses = groups;
  ds.train = draw_split(rng, means, spec.train_counts, spec.feature_noise);
  ds.val = draw_split(rng, means, std::vector<std::int64_t>(static_cast<std::size_t>(L), spec.val_per_class),
                      spec.feature_noise);
  ds.test = draw_split(rng, means, std::vector<std::int64_t>(static_cast<std::size_t>(L), spec.test_per_class),
                       spec.feature_noise);
  return ds;
}

LongTailDataset apply_superclass_noise(const LongTailDataset& ds, double p, std::uint64_t seed) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("label noise probability must be in [0, 1]");
  if (static_cast<Index>(ds.superclasses.size()) != ds.num_classes)
    throw std::invalid_argument("apply_superclass_noise: dataset has no superclass map");
  std::vector<std::vector<Index>> members;
  for (Index c = 0; c < ds.num_classes; ++c) {
    const auto g = static_cast<std::size_t>(ds.superclasses[static_cast<std::size_t>(c)]);
    if (members.size() <= g) members.resize(g + 1);
    members[g].push_back(c);
  }
  LongTailDataset out = ds;
  Xoshiro256 rng(seed);
  for (auto& label : out.train.labels) {
    if (!(rng.uniform() < p)) continue;
    const auto& group = members[static_cast<std::size_t>(ds.superclasses[static_cast<std::size_t>(label)])];
    label = group[static_cast<std::size_t>(rng.below(group.size()))];
  }
  return out;
}

void write_split_csv(std::ostream& out, const Split& split) {
  CsvWriter csv(out);
  std::vector<std::string> header{"label"};
  for (Index j = 0; j < split.features.cols(); ++j) header.push_back("x" + std::to_string(j));
  csv.header(header);
  std::vector<std::string> row(header.size());
  for (Index i = 0; i < split.size(); ++i) {
    row[0] = std::to_string(split.labels[static_cast<std::size_t>(i)]);
    for (Index j = 0; j < split.features.cols(); ++j)
      row[static_cast<std::size_t>(j + 1)] = format_double(split.features(i, j));
    csv.row(row);
  }
}

Split read_split_csv(std::istream& in) {
  const CsvTable table = read_csv(in);
  if (table.header.empty() || table.header[0] != "label")
    throw std::runtime_error("dataset CSV must start with a 'label' column");
  const Index dim = static_cast<Index>(table.header.size()) - 1;
  Split split;
  split.features.resize(static_cast<Index>(table.rows.size()), dim);
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& r = table.rows[i];
    split.labels.push_back(std::stol(r[0]));
    for (Index j = 0; j < dim; ++j)
      split.features(static_cast<Index>(i), j) = std::stod(r[static_cast<std::size_t>(j + 1)]);
  }
  return split;
}

}  // namespace topk
