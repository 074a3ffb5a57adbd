#include "topk/model.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>

#include "topk/csv.hpp"
#include "topk/noise.hpp"

namespace topk {

Index ModelShape::parameter_count() const {
  const Index feat = hidden > 0 ? hidden : input_dim;
  return hidden * input_dim + hidden + num_classes * feat + num_classes;
}

namespace {

void validate_shape(const ModelShape& shape) {
  if (shape.input_dim < 1 || shape.num_classes < 2 || shape.hidden < 0)
    throw std::invalid_argument("model shape needs input_dim >= 1, num_classes >= 2, hidden >= 0");
  if (!(shape.score_scale > 0.0)) throw std::invalid_argument("score_scale must be > 0");
}

}  // namespace

Model::Model(const ModelShape& shape, std::uint64_t seed, double init_scale) : shape_(shape) {
  validate_shape(shape);
  theta_ = VectorXd::Zero(shape.parameter_count());
  Xoshiro256 rng(seed);
  const double hidden_std = init_scale / std::sqrt(static_cast<double>(shape.input_dim));
  for (Index i = hidden_w_offset(); i < hidden_b_offset(); ++i) theta_(i) = hidden_std * rng.normal();
  const double class_std = init_scale / std::sqrt(static_cast<double>(feature_dim()));
  for (Index i = class_w_offset(); i < class_b_offset(); ++i) theta_(i) = class_std * rng.normal();
}

Model::Model(const ModelShape& shape, VectorXd parameters) : shape_(shape), theta_(std::move(parameters)) {
  validate_shape(shape);
  if (theta_.size() != shape.parameter_count())
    throw std::invalid_argument("parameter vector does not match model shape");
}

Model::ConstMatrixMap Model::hidden_weights() const {
  return ConstMatrixMap(theta_.data() + hidden_w_offset(), shape_.hidden, shape_.input_dim);
}
Model::ConstVectorMap Model::hidden_bias() const {
  return ConstVectorMap(theta_.data() + hidden_b_offset(), shape_.hidden);
}
Model::ConstMatrixMap Model::class_weights() const {
  return ConstMatrixMap(theta_.data() + class_w_offset(), shape_.num_classes, feature_dim());
}
Model::ConstVectorMap Model::class_bias() const {
  return ConstVectorMap(theta_.data() + class_b_offset(), shape_.num_classes);
}

Model::Trace Model::forward(const Eigen::Ref<const VectorXd>& x) const {
  if (x.size() != shape_.input_dim) throw std::invalid_argument("input has wrong dimension");
  Trace t;
  if (shape_.hidden > 0) {
    t.pre_activation = hidden_weights() * x + hidden_bias();
    t.features = t.pre_activation.cwiseMax(0.0);
  } else {
    t.features = x;
  }
  const auto W = class_weights();
  if (shape_.normalize) {
    t.feature_norm = t.features.norm();
    t.row_norms = W.rowwise().norm();
    const VectorXd unit = t.feature_norm > 0.0 ? VectorXd(t.features / t.feature_norm)
                                               : VectorXd::Zero(t.features.size());
    const VectorXd inv_rows = t.row_norms.unaryExpr([](double n) { return n > 0.0 ? 1.0 / n : 0.0; });
    t.scores = shape_.score_scale * inv_rows.asDiagonal() * (W * unit);
  } else {
    t.scores = W * t.features + class_bias();
  }
  return t;
}

VectorXd Model::scores(const Eigen::Ref<const VectorXd>& x) const { return forward(x).scores; }

Eigen::MatrixXd Model::score_matrix(const Eigen::MatrixXd& X) const {
  Eigen::MatrixXd out(X.rows(), shape_.num_classes);
  for (Index i = 0; i < X.rows(); ++i) out.row(i) = scores(X.row(i).transpose()).transpose();
  return out;
}

void Model::backward(const Eigen::Ref<const VectorXd>& x, const Trace& t,
                     const Eigen::Ref<const VectorXd>& score_grad, Eigen::Ref<VectorXd> grad) const {
  const auto W = class_weights();
  MatrixMap gW(grad.data() + class_w_offset(), shape_.num_classes, feature_dim());
  VectorXd g_features;

  if (shape_.normalize) {
    const double scale = shape_.score_scale;
    const VectorXd unit = t.feature_norm > 0.0 ? VectorXd(t.features / t.feature_norm)
                                               : VectorXd::Zero(t.features.size());
    VectorXd g_unit = VectorXd::Zero(unit.size());
    for (Index c = 0; c < shape_.num_classes; ++c) {
      const double norm = t.row_norms(c);
      if (norm == 0.0 || score_grad(c) == 0.0) continue;
      const VectorXd w_hat = W.row(c).transpose() / norm;
      const double g = scale * score_grad(c);
      // d(w_hat . u)/dw = (I - w_hat w_hat^T) u / |w|
      gW.row(c) += (g / norm) * (unit - w_hat * w_hat.dot(unit)).transpose();
      g_unit += g * w_hat;
    }
    if (t.feature_norm > 0.0)
      g_features = (g_unit - unit * unit.dot(g_unit)) / t.feature_norm;
    else
      g_features = VectorXd::Zero(unit.size());
  } else {
    gW += score_grad * t.features.transpose();
    grad.segment(class_b_offset(), shape_.num_classes) += score_grad;
    if (shape_.hidden > 0) g_features = W.transpose() * score_grad;
  }

  if (shape_.hidden > 0) {
    const VectorXd g_pre = (t.pre_activation.array() > 0.0).select(g_features, 0.0);
    MatrixMap gW1(grad.data() + hidden_w_offset(), shape_.hidden, shape_.input_dim);
    gW1 += g_pre * x.transpose();
    grad.segment(hidden_b_offset(), shape_.hidden) += g_pre;
  }
}

void save_model(std::ostream& out, const Model& model) {
  const auto& s = model.shape();
  out << "topk-model 1\n"
      << "input_dim " << s.input_dim << " num_classes " << s.num_classes << " hidden " << s.hidden
      << " normalize " << (s.normalize ? 1 : 0) << " score_scale " << format_double(s.score_scale) << '\n'
      << "parameters " << model.parameters().size() << '\n';
  for (Index i = 0; i < model.parameters().size(); ++i) out << format_double(model.parameters()(i)) << '\n';
}

Model load_model(std::istream& in) {
  std::string tag, key;
  int version = 0;
  if (!(in >> tag >> version) || tag != "topk-model" || version != 1)
    throw std::runtime_error("not a topk-model v1 checkpoint");
  ModelShape shape;
  int normalize = 0;
  std::string scale;
  auto expect = [&](const char* name) {
    if (!(in >> key) || key != name) throw std::runtime_error(std::string("checkpoint: expected ") + name);
  };
  expect("input_dim");
  in >> shape.input_dim;
  expect("num_classes");
  in >> shape.num_classes;
  expect("hidden");
  in >> shape.hidden;
  expect("normalize");
  in >> normalize;
  expect("score_scale");
  in >> scale;
  shape.normalize = normalize != 0;
  shape.score_scale = std::stod(scale);
  expect("parameters");
  Index n = 0;
  in >> n;
  if (!in || n != shape.parameter_count()) throw std::runtime_error("checkpoint: parameter count mismatch");
  VectorXd theta(n);
  std::string value;
  for (Index i = 0; i < n; ++i) {
    if (!(in >> value)) throw std::runtime_error("checkpoint: truncated parameter list");
    theta(i) = std::stod(value);
  }
  return Model(shape, std::move(theta));
}

}  // namespace topk
