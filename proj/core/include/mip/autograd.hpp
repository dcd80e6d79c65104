#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// matrices. A Tape records every intermediate value together with a closure
// that propagates the upstream gradient to the node's parents. Scalars are
// 1x1 matrices.

#include <deque>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mip/common.hpp"

namespace mip {

/// A named trainable tensor and its accumulated gradient.
struct Parameter {
  Matrix value;
  Matrix grad;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

/// Ordered collection of named parameters. Iteration order is lexicographic
/// by name so that serialization and optimizer state are deterministic.
class ParameterStore {
 public:
  Parameter& add(const std::string& name, Matrix value);
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  void zero_grad();
  std::size_t size() const { return params_.size(); }
  std::size_t num_scalars() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::map<std::string, Parameter> params_;
};

class Tape;

/// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
  bool valid() const { return tape != nullptr; }
};

class Tape {
 public:
  // Receives the upstream gradient and the node's own forward value.
  using BackwardFn = std::function<void(Tape&, const Matrix& grad, const Matrix& out)>;

  /// With gradients disabled, no closures are retained (inference mode).
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var param(Parameter& p);

  /// Records an op output. `parents` decide whether the node needs a
  /// gradient; `fn` is dropped when none of them does.
  Var record(Matrix value, std::initializer_list<Var> parents, BackwardFn fn);
  Var record(Matrix value, std::span<const Var> parents, BackwardFn fn);

  /// Adds `g` into the gradient slot of `v` if `v` needs a gradient.
  void accumulate(Var v, const Matrix& g);
  bool needs_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].needs_grad; }

  const Matrix& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  const Matrix& grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].grad; }

  /// Seeds d(root)/d(root) = 1 and runs every recorded closure in reverse.
  /// Parameter leaves add their gradient into Parameter::grad.
  void backward(Var root);

  bool grad_enabled() const { return grad_enabled_; }
  std::size_t size() const { return nodes_.size(); }

  /// Inference tapes only: frees the values of nodes [begin, end) so their
  /// memory is reused by later ops. No effect when gradients are enabled.
  void release(int begin, int end);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool needs_grad = false;
  };

  std::deque<Node> nodes_;
  bool grad_enabled_;
};

namespace ag {

Var matmul(Var a, Var b);
/// a * b^T
Var matmul_nt(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, double s);
Var neg(Var a);
/// Adds a 1xC row to every row of a.
Var add_row(Var a, Var row);
Var concat_cols(Var a, Var b);
Var row_softmax(Var a);
Var gelu(Var a);
/// Per-row layer normalization followed by an affine map (gain, bias: 1xC).
Var layer_norm(Var a, Var gain, Var bias, double eps = 1e-5);
/// Sum of all entries as a 1x1 scalar.
Var sum(Var a);
/// Returns a copy cut from the tape history.
Var detach(Var a);

/// Applies a square N x N matrix to each consecutive block of N rows of x.
Var propagate_blocks(Var adjacency, Var x);
/// Same for constant operators. The operator must outlive the tape.
Var propagate_blocks(const SparseMatrix& adjacency, Var x);
Var propagate_blocks(const Matrix& adjacency, Var x);

/// y[i] = x[index[i]]
Var gather_rows(Var x, std::vector<Index> index);

/// Adds embedding row t to every row (b, t, n) of a (B*T*N) x C matrix.
Var add_time_embedding(Var x, Var embedding, Index num_nodes);

/// Scaled dot-product attention along the time axis. q, k, v are
/// (B*T*N) x D with rows ordered (b, t, n); each (b, n) series attends over
/// its own T rows. Heads split the columns evenly; logits are scaled by
/// 1/sqrt(D / heads).
Var temporal_attention(Var q, Var k, Var v, Index steps, Index num_nodes, int heads);

}  // namespace ag

/// Attention weights for a single T x D series (for inspection and tests).
Matrix attention_weights(const Matrix& series, const Matrix& wq, const Matrix& wk);

}  // namespace mip
