#include "mip/losses.hpp"

#include <cmath>

namespace mip {

namespace {

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

void check_pair(const Matrix& pred, const Matrix& target, const Matrix* mask) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw ShapeError("loss: prediction " + shape_str(pred) + " vs target " + shape_str(target));
  }
  if (mask != nullptr && (mask->rows() != pred.rows() || mask->cols() != pred.cols())) {
    throw ShapeError("loss: mask " + shape_str(*mask) + " vs prediction " + shape_str(pred));
  }
}

bool valid(const Matrix* mask, Index r, Index c) { return mask == nullptr || (*mask)(r, c) != 0.0; }

}  // namespace

void LossConfig::validate() const {
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0) || !(margin >= 0.0)) {
    throw ConfigError("loss weights and margin must be nonnegative");
  }
}

double elementwise_loss(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) {
    throw ShapeError("elementwise_loss: lengths " + std::to_string(pred.size()) + " and " +
                     std::to_string(target.size()));
  }
  if (pred.empty()) throw ShapeError("elementwise_loss: empty feature vector");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - target[i]);
  return s / static_cast<double>(pred.size());
}

SlotLosses slot_losses(const Matrix& pred, const Matrix& target, const Matrix* mask) {
  check_pair(pred, target, mask);
  SlotLosses out{Eigen::VectorXd::Zero(pred.rows()), std::vector<char>(static_cast<std::size_t>(pred.rows()), 0)};
  for (Index r = 0; r < pred.rows(); ++r) {
    double s = 0.0;
    int count = 0;
    for (Index c = 0; c < pred.cols(); ++c) {
      if (!valid(mask, r, c)) continue;
      s += std::abs(pred(r, c) - target(r, c));
      ++count;
    }
    if (count > 0) {
      out.values(r) = s / count;
      out.valid[static_cast<std::size_t>(r)] = 1;
    }
  }
  return out;
}

double task_loss(const FlowTensor& pred, const FlowTensor& target, const Matrix* mask) {
  check_pair(pred.values, target.values, mask);
  double s = 0.0;
  Index count = 0;
  for (Index r = 0; r < pred.values.rows(); ++r) {
    for (Index c = 0; c < pred.values.cols(); ++c) {
      if (!valid(mask, r, c)) continue;
      s += std::abs(pred.values(r, c) - target.values(r, c));
      ++count;
    }
  }
  if (count == 0) throw DomainError("task_loss: no valid entries");
  return s / static_cast<double>(count);
}

double invariant_loss(const FlowTensor& aux_pred, const FlowTensor& target, double lambda1,
                      const Matrix* mask) {
  const SlotLosses l = slot_losses(aux_pred.values, target.values, mask);
  double sum = 0.0;
  Index count = 0;
  for (Index r = 0; r < l.values.size(); ++r) {
    if (l.valid[static_cast<std::size_t>(r)] == 0) continue;
    sum += l.values(r);
    ++count;
  }
  if (count == 0) throw DomainError("invariant_loss: no valid entries");
  const double mean = sum / static_cast<double>(count);
  double var = 0.0;
  for (Index r = 0; r < l.values.size(); ++r) {
    if (l.valid[static_cast<std::size_t>(r)] == 0) continue;
    var += (l.values(r) - mean) * (l.values(r) - mean);
  }
  var /= static_cast<double>(count);
  return mean + lambda1 * var;
}

double total_loss(double task, double inv, double reg, const LossConfig& cfg) {
  return task + inv + cfg.lambda2 * reg;
}

Var task_loss(Var pred, const Matrix& target, const Matrix* mask) {
  check_pair(pred.value(), target, mask);
  const Matrix& p = pred.value();
  Matrix dir(p.rows(), p.cols());
  double s = 0.0;
  Index count = 0;
  for (Index r = 0; r < p.rows(); ++r) {
    for (Index c = 0; c < p.cols(); ++c) {
      if (!valid(mask, r, c)) {
        dir(r, c) = 0.0;
        continue;
      }
      const double e = p(r, c) - target(r, c);
      s += std::abs(e);
      dir(r, c) = sign(e);
      ++count;
    }
  }
  if (count == 0) throw DomainError("task_loss: no valid entries");
  const double inv_count = 1.0 / static_cast<double>(count);
  Matrix out(1, 1);
  out(0, 0) = s * inv_count;
  return pred.tape->record(std::move(out), {pred},
                           [pred, dir = std::move(dir), inv_count](Tape& t, const Matrix& g, const Matrix&) {
                             t.accumulate(pred, dir * (g(0, 0) * inv_count));
                           });
}

Var invariant_loss(Var aux_pred, const Matrix& target, double lambda1, const Matrix* mask) {
  const Matrix& p = aux_pred.value();
  const SlotLosses l = slot_losses(p, target, mask);
  double sum = 0.0;
  Index count = 0;
  for (Index r = 0; r < l.values.size(); ++r) {
    if (l.valid[static_cast<std::size_t>(r)] == 0) continue;
    sum += l.values(r);
    ++count;
  }
  if (count == 0) throw DomainError("invariant_loss: no valid entries");
  const auto n = static_cast<double>(count);
  const double mean = sum / n;
  double var = 0.0;
  for (Index r = 0; r < l.values.size(); ++r) {
    if (l.valid[static_cast<std::size_t>(r)] != 0) var += (l.values(r) - mean) * (l.values(r) - mean);
  }
  var /= n;

  // dL/dl_r = 1/n + lambda1 * 2 (l_r - mean) / n; the mean's own dependence
  // on l_r cancels because deviations sum to zero.
  Matrix dp = Matrix::Zero(p.rows(), p.cols());
  for (Index r = 0; r < p.rows(); ++r) {
    if (l.valid[static_cast<std::size_t>(r)] == 0) continue;
    const double dl = (1.0 + 2.0 * lambda1 * (l.values(r) - mean)) / n;
    int k = 0;
    for (Index c = 0; c < p.cols(); ++c) k += valid(mask, r, c) ? 1 : 0;
    for (Index c = 0; c < p.cols(); ++c) {
      if (valid(mask, r, c)) dp(r, c) = dl * sign(p(r, c) - target(r, c)) / k;
    }
  }
  Matrix out(1, 1);
  out(0, 0) = mean + lambda1 * var;
  return aux_pred.tape->record(std::move(out), {aux_pred},
                               [aux_pred, dp = std::move(dp)](Tape& t, const Matrix& g, const Matrix&) {
                                 t.accumulate(aux_pred, dp * g(0, 0));
                               });
}

}  // namespace mip
