#pragma once

// Shared inputs for the worked illustration: four scores and the three
// perturbation vectors that produce the perturbed scores
// [2.6,2.5,2.4,0.8], [2.5,2.7,2.2,0.6], [2.3,2.5,2.4,0.4] at epsilon = 1.

#include "topk/noise.hpp"
#include "topk/score_core.hpp"

namespace fixtures {

inline topk::VectorXd illustration_scores() {
  topk::VectorXd s(4);
  s << 2.4, 2.6, 2.3, 0.5;
  return s;
}

inline topk::NoiseBatch illustration_noise() {
  topk::RowMatrixXd z(3, 4);
  z << 0.2, -0.1, 0.1, 0.3,
       0.1, 0.1, -0.1, 0.1,
      -0.1, -0.1, 0.1, -0.1;
  return topk::NoiseBatch(z);
}

}  // namespace fixtures
