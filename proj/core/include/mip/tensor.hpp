#pragma once

#include "mip/common.hpp"

namespace mip {

enum class Units { normalized, raw };

/// Batched T x N x k flow observations. Row (b, t, n) of `values` is
/// (b * steps + t) * nodes + n; columns are feature channels.
struct FlowTensor {
  Index batch = 1;
  Index steps = 0;
  Index nodes = 0;
  Index features = 0;
  Matrix values;
  Units units = Units::normalized;

  static FlowTensor zeros(Index batch, Index steps, Index nodes, Index features,
                          Units units = Units::normalized) {
    return FlowTensor{batch, steps, nodes, features, Matrix::Zero(batch * steps * nodes, features),
                      units};
  }

  Index row(Index b, Index t, Index n) const { return (b * steps + t) * nodes + n; }
  double& at(Index b, Index t, Index n, Index f) { return values(row(b, t, n), f); }
  double at(Index b, Index t, Index n, Index f) const { return values(row(b, t, n), f); }

  void check() const {
    expect_shape(values, batch * steps * nodes, features, "FlowTensor");
  }
};

enum class PromptKind { invariant, variant };

/// T x N x d prompt stack for one sample; row (t, n) is t * nodes + n.
struct PromptTensor {
  Index steps = 0;
  Index nodes = 0;
  Index dim = 0;
  Matrix values;
  PromptKind kind = PromptKind::invariant;

  Index row(Index t, Index n) const { return t * nodes + n; }
  auto slot(Index t, Index n) { return values.row(row(t, n)); }
  auto slot(Index t, Index n) const { return values.row(row(t, n)); }
};

}  // namespace mip
