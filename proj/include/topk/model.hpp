#pragma once

// Linear (optionally one-hidden-layer ReLU) scorer. All parameters live in a
// single flat vector so the optimiser can treat them uniformly.
//
// With `normalize` set, the last hidden activation (the input features for a
// purely linear model) and every class weight row are scaled to unit L2 norm,
// and the cosine logits are multiplied by `score_scale`; there is no bias in
// that mode. Gradients flow through both normalisations.

#include <cstdint>
#include <iosfwd>

#include <Eigen/Core>

#include "topk/score_core.hpp"

namespace topk {

struct ModelShape {
  Index input_dim = 0;
  Index num_classes = 0;
  Index hidden = 0;  // 0: linear scorer
  bool normalize = false;
  double score_scale = 1.0;

  Index parameter_count() const;
};

class Model {
 public:
  using ConstMatrixMap = Eigen::Map<const Eigen::MatrixXd>;
  using MatrixMap = Eigen::Map<Eigen::MatrixXd>;
  using ConstVectorMap = Eigen::Map<const VectorXd>;

  /// Weights ~ N(0, init_scale^2 / fan_in), biases zero.
  Model(const ModelShape& shape, std::uint64_t seed, double init_scale = 1.0);
  Model(const ModelShape& shape, VectorXd parameters);

  const ModelShape& shape() const { return shape_; }
  const VectorXd& parameters() const { return theta_; }
  VectorXd& parameters() { return theta_; }

  ConstMatrixMap hidden_weights() const;  // hidden x input_dim
  ConstVectorMap hidden_bias() const;
  ConstMatrixMap class_weights() const;   // num_classes x feature_dim
  ConstVectorMap class_bias() const;      // unused when normalize

  Index feature_dim() const { return shape_.hidden > 0 ? shape_.hidden : shape_.input_dim; }

  /// Intermediate values of one forward pass, reused by backward().
  struct Trace {
    VectorXd pre_activation;
    VectorXd features;
    double feature_norm = 0.0;
    VectorXd row_norms;
    VectorXd scores;
  };

  VectorXd scores(const Eigen::Ref<const VectorXd>& x) const;
  Trace forward(const Eigen::Ref<const VectorXd>& x) const;
  /// Scores for every row of X.
  Eigen::MatrixXd score_matrix(const Eigen::MatrixXd& X) const;

  /// Adds d(loss)/d(theta) to `grad` given d(loss)/d(scores).
  void backward(const Eigen::Ref<const VectorXd>& x, const Trace& trace,
                const Eigen::Ref<const VectorXd>& score_grad, Eigen::Ref<VectorXd> grad) const;

 private:
  Index hidden_w_offset() const { return 0; }
  Index hidden_b_offset() const { return shape_.hidden * shape_.input_dim; }
  Index class_w_offset() const { return hidden_b_offset() + shape_.hidden; }
  Index class_b_offset() const { return class_w_offset() + shape_.num_classes * feature_dim(); }

  ModelShape shape_;
  VectorXd theta_;
};

/// Text checkpoint:
///   topk-model 1
///   input_dim <d> num_classes <L> hidden <h> normalize <0|1> score_scale <x>
///   parameters <n>
///   <n lines, one parameter each, shortest round-trip decimal>
/// Parameter order: hidden weights (column-major), hidden bias, class
/// weights (column-major), class bias.
void save_model(std::ostream& out, const Model& model);
Model load_model(std::istream& in);

}  // namespace topk
