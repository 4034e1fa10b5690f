#include "ctt/losses.hpp"

#include <stdexcept>
#include <string>

namespace ctt {

void LossConfig::validate() const {
  if (lambda < 0.0) throw std::invalid_argument("LossConfig: lambda must be >= 0");
  if (recovery_threshold <= 0.0) {
    throw std::invalid_argument("LossConfig: recovery_threshold must be > 0");
  }
}

Tensor regression_loss(const Tensor& pred, const Tensor& truth) {
  if (pred.size() == 0) throw std::invalid_argument("regression_loss: empty batch");
  Tensor diff = sub(pred, truth);
  return mean(mul(diff, diff));
}

int recovery_label(double post_va, double pre_va, double threshold) {
  return (post_va - pre_va > threshold) ? 1 : 0;
}

Tensor auxiliary_classification_loss(const Tensor& pred,
                                     const std::vector<double>& pre_va,
                                     const std::vector<int>& labels,
                                     double threshold) {
  const std::size_t n = pred.size();
  if (n == 0) {
    throw std::invalid_argument("auxiliary_classification_loss: empty batch");
  }
  if (pre_va.size() != n || labels.size() != n) {
    throw std::invalid_argument(
        "auxiliary_classification_loss: batch lengths differ");
  }
  std::vector<double> offsets(n), pos_mask(n), neg_mask(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] != 0 && labels[i] != 1) {
      throw std::invalid_argument(
          "auxiliary_classification_loss: labels must be 0 or 1");
    }
    offsets[i] = pre_va[i] + threshold;
    pos_mask[i] = labels[i] == 1 ? 1.0 : 0.0;
    neg_mask[i] = 1.0 - pos_mask[i];
  }
  Tensor margin = sub(pred, Tensor(pred.shape(), std::move(offsets)));
  Tensor positive_term = mul(Tensor(pred.shape(), std::move(pos_mask)),
                             relu(scale(margin, -1.0)));
  Tensor negative_term = mul(Tensor(pred.shape(), std::move(neg_mask)),
                             relu(margin));
  return mean(add(positive_term, negative_term));
}

Tensor total_loss(const Tensor& regression, const Tensor& classification,
                  double lambda) {
  return add(regression, scale(classification, lambda));
}

}  // namespace ctt
