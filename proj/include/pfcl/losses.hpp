#pragma once

#include <span>

#include "pfcl/linalg.hpp"

namespace pfcl {

/// Scalar loss and its gradient with respect to the new model's logits.
struct LossOutput {
  double value = 0.0;
  Matrix dlogits;
};

struct Hyperparams {
  double alpha = 0.5;  // weight of the distillation term
  double tau = 2.0;    // softmax temperature

  /// Throws ConfigError unless alpha > 0 and tau > 0.
  void validate() const;
};

/// Mean softmax cross-entropy. dlogits = (softmax - onehot) / N.
LossOutput cross_entropy(const Matrix& logits, std::span<const int> labels);

/// Row-wise softmax(logits / tau), max-subtracted.
Matrix soften(const Matrix& logits, double tau);

/// Temperature-scaled soft cross-entropy against a frozen teacher:
///   value = (1/N) Σ_i -tau² Σ_c p_old[i,c] log p_new[i,c]
/// This is KL(p_old || p_new) plus the teacher entropy, so at z_new == z_old
/// the value is the scaled entropy, not zero; the gradient is the same as
/// for KL: (tau / N) (p_new - p_old). z_old receives no gradient.
/// Empty inputs (0 rows) yield value 0 and an empty gradient.
LossOutput kd_loss(const Matrix& z_new, const Matrix& z_old, double tau);

/// Classification on the labeled block plus alpha-weighted distillation on
/// the selected block:
///   value = CE(new_t, labels) + alpha · KD(new_sel, old_sel, tau)
/// dlogits is the row stack [labeled block; selected block], shape
/// (N + K) x C. When logits_old_t is empty no old model exists and the
/// distillation term is skipped; an empty selected block does the same.
LossOutput combined_loss(const Matrix& logits_new_t, const Matrix& logits_old_t, std::span<const int> labels,
                         const Matrix& logits_new_sel, const Matrix& logits_old_sel, const Hyperparams& hp);

}  // namespace pfcl
