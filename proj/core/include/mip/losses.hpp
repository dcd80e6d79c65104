#pragma once

#include <span>

#include "mip/autograd.hpp"
#include "mip/tensor.hpp"

namespace mip {

struct LossConfig {
  double lambda1 = 0.3;  // variance weight of the invariant loss
  double lambda2 = 0.1;  // memory regularization weight
  double margin = 1.0;   // hinge margin kappa

  void validate() const;
};

/// Mean absolute difference over the k features of one (t, n) slot.
double elementwise_loss(std::span<const double> pred, std::span<const double> target);

/// Masked mean absolute error over every valid scalar entry. `mask` (same
/// shape, nonzero = valid) may be null.
double task_loss(const FlowTensor& pred, const FlowTensor& target, const Matrix* mask = nullptr);

/// Mean of per-slot losses plus lambda1 times their population variance,
/// over every (b, t, n) slot with at least one valid feature.
double invariant_loss(const FlowTensor& aux_pred, const FlowTensor& target, double lambda1,
                      const Matrix* mask = nullptr);

/// L_task + L_inv + lambda2 * L_reg.
double total_loss(double task, double inv, double reg, const LossConfig& cfg);

/// Per-slot losses l(b, t, n) and their validity (row-aligned with `pred`).
struct SlotLosses {
  Eigen::VectorXd values;
  std::vector<char> valid;
};
SlotLosses slot_losses(const Matrix& pred, const Matrix& target, const Matrix* mask);

// Tape versions; target and mask are constants.
Var task_loss(Var pred, const Matrix& target, const Matrix* mask = nullptr);
Var invariant_loss(Var aux_pred, const Matrix& target, double lambda1, const Matrix* mask = nullptr);

}  // namespace mip
