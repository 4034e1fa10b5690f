#pragma once

#include <vector>

#include "ctt/tensor.hpp"

namespace ctt {

struct LossConfig {
  double lambda = 2.0;
  double recovery_threshold = 0.2;
  bool acl_enabled = true;

  void validate() const;
};

// Mean squared error over a batch of predictions; differentiable w.r.t. pred.
// Shapes must match, batch must be non-empty.
Tensor regression_loss(const Tensor& pred, const Tensor& truth);

// 1 iff post - pre exceeds the threshold strictly.
int recovery_label(double post_va, double pre_va, double threshold);

// Margin penalty: per sample P = pred - pre - threshold; positive samples
// pay Relu(-P), negative samples pay Relu(P). Zero exactly when every
// prediction sits on (or at) its label's side of the margin.
Tensor auxiliary_classification_loss(const Tensor& pred,
                                     const std::vector<double>& pre_va,
                                     const std::vector<int>& labels,
                                     double threshold);

Tensor total_loss(const Tensor& regression, const Tensor& classification,
                  double lambda);

}  // namespace ctt
