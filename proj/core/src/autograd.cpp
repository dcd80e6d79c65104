#include "mip/autograd.hpp"

#include <algorithm>
#include <cmath>

namespace mip {

Matrix row_softmax(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Index r = 0; r < logits.rows(); ++r) {
    const double mx = logits.row(r).maxCoeff();
    out.row(r) = (logits.row(r).array() - mx).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

Parameter& ParameterStore::add(const std::string& name, Matrix value) {
  auto [it, inserted] = params_.try_emplace(name);
  if (!inserted) throw ContractError("duplicate parameter name: " + name);
  it->second.value = std::move(value);
  it->second.zero_grad();
  return it->second;
}

Parameter& ParameterStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("unknown parameter: " + name);
  return it->second;
}

const Parameter& ParameterStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("unknown parameter: " + name);
  return it->second;
}

void ParameterStore::zero_grad() {
  for (auto& [_, p] : params_) p.zero_grad();
}

std::size_t ParameterStore::num_scalars() const {
  std::size_t n = 0;
  for (const auto& [_, p] : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

const Matrix& Var::value() const { return tape->value(id); }

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(Parameter& p) {
  nodes_.push_back(Node{p.value, {}, {}, &p, grad_enabled_});
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::record(Matrix value, std::initializer_list<Var> parents, BackwardFn fn) {
  return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()),
                std::move(fn));
}

Var Tape::record(Matrix value, std::span<const Var> parents, BackwardFn fn) {
  bool needs = false;
  if (grad_enabled_) {
    for (const Var& p : parents) needs = needs || needs_grad(p);
  }
  Node node{std::move(value), {}, {}, nullptr, needs};
  if (needs) node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::release(int begin, int end) {
  if (grad_enabled_) return;
  for (int id = std::max(begin, 0); id < end && id < static_cast<int>(nodes_.size()); ++id) {
    nodes_[static_cast<std::size_t>(id)].value = Matrix();
  }
}

void Tape::accumulate(Var v, const Matrix& g) {
  Node& node = nodes_[static_cast<std::size_t>(v.id)];
  if (!node.needs_grad) return;
  if (node.grad.size() == 0) {
    node.grad = g;
  } else {
    node.grad += g;
  }
}

void Tape::backward(Var root) {
  if (root.rows() != 1 || root.cols() != 1) {
    throw ContractError("backward() needs a scalar root, got " + shape_str(root.value()));
  }
  if (!needs_grad(root)) return;
  accumulate(root, Matrix::Ones(1, 1));
  for (int id = root.id; id >= 0; --id) {
    Node& node = nodes_[static_cast<std::size_t>(id)];
    if (node.grad.size() == 0) continue;
    if (node.backward) node.backward(*this, node.grad, node.value);
    if (node.param != nullptr) node.param->grad += node.grad;
  }
}

namespace ag {

namespace {

void require_same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw ContractError("operands live on different tapes");
}

}  // namespace

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + shape_str(a.value()) + " * " + shape_str(b.value()));
  }
  Matrix out = a.value() * b.value();
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix&) {
    if (t.needs_grad(a)) t.accumulate(a, g * b.value().transpose());
    if (t.needs_grad(b)) t.accumulate(b, a.value().transpose() * g);
  });
}

Var matmul_nt(Var a, Var b) {
  require_same_tape(a, b);
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: " + shape_str(a.value()) + " * " + shape_str(b.value()) + "^T");
  }
  Matrix out = a.value() * b.value().transpose();
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix&) {
    if (t.needs_grad(a)) t.accumulate(a, g * b.value());
    if (t.needs_grad(b)) t.accumulate(b, g.transpose() * a.value());
  });
}

Var add(Var a, Var b) {
  require_same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("add: " + shape_str(a.value()) + " + " + shape_str(b.value()));
  }
  Matrix out = a.value() + b.value();
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(Var a, Var b) {
  require_same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("sub: " + shape_str(a.value()) + " - " + shape_str(b.value()));
  }
  Matrix out = a.value() - b.value();
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, g);
    if (t.needs_grad(b)) t.accumulate(b, -g);
  });
}

Var scale(Var a, double s) {
  Matrix out = a.value() * s;
  return a.tape->record(std::move(out), {a},
                        [a, s](Tape& t, const Matrix& g, const Matrix&) { t.accumulate(a, g * s); });
}

Var neg(Var a) { return scale(a, -1.0); }

Var add_row(Var a, Var row) {
  require_same_tape(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw ShapeError("add_row: " + shape_str(a.value()) + " + row " + shape_str(row.value()));
  }
  Matrix out = a.value().rowwise() + row.value().row(0);
  return a.tape->record(std::move(out), {a, row}, [a, row](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, g);
    if (t.needs_grad(row)) t.accumulate(row, g.colwise().sum());
  });
}

Var concat_cols(Var a, Var b) {
  require_same_tape(a, b);
  if (a.rows() != b.rows()) {
    throw ShapeError("concat_cols: " + shape_str(a.value()) + " | " + shape_str(b.value()));
  }
  Matrix out(a.rows(), a.cols() + b.cols());
  out.leftCols(a.cols()) = a.value();
  out.rightCols(b.cols()) = b.value();
  const Index ac = a.cols();
  const Index bc = b.cols();
  return a.tape->record(std::move(out), {a, b}, [a, b, ac, bc](Tape& t, const Matrix& g, const Matrix&) {
    if (t.needs_grad(a)) t.accumulate(a, g.leftCols(ac));
    if (t.needs_grad(b)) t.accumulate(b, g.rightCols(bc));
  });
}

Var row_softmax(Var a) {
  Matrix out = mip::row_softmax(a.value());
  return a.tape->record(std::move(out), {a}, [a](Tape& t, const Matrix& g, const Matrix& y) {
    const Eigen::VectorXd dot = (g.array() * y.array()).rowwise().sum();
    Matrix ga = y.array() * (g.colwise() - dot).array();
    t.accumulate(a, ga);
  });
}

namespace {

constexpr double kSqrt2OverPi = 0.7978845608028654;
constexpr double kGeluCubic = 0.044715;

}  // namespace

// tanh approximation; smooth everywhere, which keeps finite-difference checks clean.
Var gelu(Var a) {
  const Matrix& x = a.value();
  Matrix out = x.unaryExpr([](double v) {
    return 0.5 * v * (1.0 + std::tanh(kSqrt2OverPi * (v + kGeluCubic * v * v * v)));
  });
  return a.tape->record(std::move(out), {a}, [a](Tape& t, const Matrix& g, const Matrix&) {
    Matrix d = a.value().unaryExpr([](double v) {
      const double u = kSqrt2OverPi * (v + kGeluCubic * v * v * v);
      const double th = std::tanh(u);
      const double du = kSqrt2OverPi * (1.0 + 3.0 * kGeluCubic * v * v);
      return 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * du;
    });
    t.accumulate(a, g.cwiseProduct(d));
  });
}

Var layer_norm(Var a, Var gain, Var bias, double eps) {
  require_same_tape(a, gain);
  require_same_tape(a, bias);
  const Index c = a.cols();
  if (gain.rows() != 1 || gain.cols() != c || bias.rows() != 1 || bias.cols() != c) {
    throw ShapeError("layer_norm: affine parameters must be 1x" + std::to_string(c));
  }
  const Matrix& x = a.value();
  Matrix xhat(x.rows(), c);
  Eigen::VectorXd inv_std(x.rows());
  for (Index r = 0; r < x.rows(); ++r) {
    const double mu = x.row(r).mean();
    const double var = (x.row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (x.row(r).array() - mu) * inv_std(r);
  }
  Matrix out = (xhat.array().rowwise() * gain.value().row(0).array()).rowwise() +
               bias.value().row(0).array();
  return a.tape->record(
      std::move(out), {a, gain, bias},
      [a, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          Tape& t, const Matrix& g, const Matrix&) {
        if (t.needs_grad(gain)) t.accumulate(gain, g.cwiseProduct(xhat).colwise().sum());
        if (t.needs_grad(bias)) t.accumulate(bias, g.colwise().sum());
        if (!t.needs_grad(a)) return;
        const Matrix dxhat = g.array().rowwise() * gain.value().row(0).array();
        Matrix dx(g.rows(), g.cols());
        for (Index r = 0; r < g.rows(); ++r) {
          const double m1 = dxhat.row(r).mean();
          const double m2 = dxhat.row(r).dot(xhat.row(r)) / static_cast<double>(g.cols());
          dx.row(r) = inv_std(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
        }
        t.accumulate(a, dx);
      });
}

Var sum(Var a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  const Index r = a.rows();
  const Index c = a.cols();
  return a.tape->record(std::move(out), {a}, [a, r, c](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, Matrix::Constant(r, c, g(0, 0)));
  });
}

Var detach(Var a) { return a.tape->constant(a.value()); }

namespace {

// Lays the blocks of x side by side: n x (blocks * cols). One large product
// against the stacked form reuses the packed operator across all blocks.
Matrix stack_blocks(const Matrix& x, Index n) {
  const Index blocks = x.rows() / n;
  const Index c = x.cols();
  Matrix s(n, blocks * c);
  for (Index b = 0; b < blocks; ++b) s.middleCols(b * c, c) = x.middleRows(b * n, n);
  return s;
}

Matrix unstack_blocks(const Matrix& s, Index n, Index cols) {
  const Index blocks = s.cols() / cols;
  Matrix x(blocks * n, cols);
  for (Index b = 0; b < blocks; ++b) x.middleRows(b * n, n) = s.middleCols(b * cols, cols);
  return x;
}

}  // namespace

Var propagate_blocks(Var adjacency, Var x) {
  require_same_tape(adjacency, x);
  const Index n = adjacency.rows();
  if (adjacency.cols() != n || n == 0 || x.rows() % n != 0) {
    throw ShapeError("propagate_blocks: operator " + shape_str(adjacency.value()) +
                     " incompatible with " + shape_str(x.value()));
  }
  const Index c = x.cols();
  const Matrix xs = stack_blocks(x.value(), n);
  Matrix out = unstack_blocks(adjacency.value() * xs, n, c);
  return x.tape->record(std::move(out), {adjacency, x},
                        [adjacency, x, n, c, xs](Tape& t, const Matrix& g, const Matrix&) {
                          const Matrix gs = stack_blocks(g, n);
                          if (t.needs_grad(x)) {
                            t.accumulate(x, unstack_blocks(adjacency.value().transpose() * gs, n, c));
                          }
                          if (t.needs_grad(adjacency)) t.accumulate(adjacency, gs * xs.transpose());
                        });
}

Var propagate_blocks(const SparseMatrix& adjacency, Var x) {
  const Index n = adjacency.rows();
  if (adjacency.cols() != n || n == 0 || x.rows() % n != 0) {
    throw ShapeError("propagate_blocks: operator " + shape_str(n, adjacency.cols()) +
                     " incompatible with " + shape_str(x.value()));
  }
  const Index blocks = x.rows() / n;
  Matrix out(x.rows(), x.cols());
  for (Index b = 0; b < blocks; ++b) {
    out.middleRows(b * n, n).noalias() = adjacency * x.value().middleRows(b * n, n);
  }
  // The operator is captured by pointer; callers keep it alive for the tape's lifetime.
  const SparseMatrix* op = &adjacency;
  return x.tape->record(std::move(out), {x}, [x, op, n, blocks](Tape& t, const Matrix& g, const Matrix&) {
    Matrix dx(g.rows(), g.cols());
    const SparseMatrix opt = op->transpose();
    for (Index b = 0; b < blocks; ++b) {
      dx.middleRows(b * n, n).noalias() = opt * g.middleRows(b * n, n);
    }
    t.accumulate(x, dx);
  });
}

Var propagate_blocks(const Matrix& adjacency, Var x) {
  const Index n = adjacency.rows();
  if (adjacency.cols() != n || n == 0 || x.rows() % n != 0) {
    throw ShapeError("propagate_blocks: operator " + shape_str(adjacency) +
                     " incompatible with " + shape_str(x.value()));
  }
  const Index c = x.cols();
  Matrix out = unstack_blocks(adjacency * stack_blocks(x.value(), n), n, c);
  const Matrix* op = &adjacency;
  return x.tape->record(std::move(out), {x}, [x, op, n, c](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(x, unstack_blocks(op->transpose() * stack_blocks(g, n), n, c));
  });
}

Var gather_rows(Var x, std::vector<Index> index) {
  const Matrix& xv = x.value();
  Matrix out(static_cast<Index>(index.size()), xv.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= xv.rows()) {
      throw ShapeError("gather_rows: index " + std::to_string(index[i]) + " out of range");
    }
    out.row(static_cast<Index>(i)) = xv.row(index[i]);
  }
  const Index rows = xv.rows();
  return x.tape->record(std::move(out), {x},
                        [x, rows, index = std::move(index)](Tape& t, const Matrix& g, const Matrix&) {
                          Matrix dx = Matrix::Zero(rows, g.cols());
                          for (std::size_t i = 0; i < index.size(); ++i) {
                            dx.row(index[i]) += g.row(static_cast<Index>(i));
                          }
                          t.accumulate(x, dx);
                        });
}

Var add_time_embedding(Var x, Var embedding, Index num_nodes) {
  require_same_tape(x, embedding);
  const Index steps = embedding.rows();
  if (embedding.cols() != x.cols() || x.rows() % (steps * num_nodes) != 0) {
    throw ShapeError("add_time_embedding: embedding " + shape_str(embedding.value()) +
                     " incompatible with " + shape_str(x.value()));
  }
  Matrix out = x.value();
  for (Index r = 0; r < out.rows(); ++r) out.row(r) += embedding.value().row((r / num_nodes) % steps);
  return x.tape->record(std::move(out), {x, embedding},
                        [x, embedding, steps, num_nodes](Tape& t, const Matrix& g, const Matrix&) {
                          t.accumulate(x, g);
                          if (!t.needs_grad(embedding)) return;
                          Matrix de = Matrix::Zero(steps, g.cols());
                          for (Index r = 0; r < g.rows(); ++r) de.row((r / num_nodes) % steps) += g.row(r);
                          t.accumulate(embedding, de);
                        });
}

namespace {

using StridedMap = Eigen::Map<const Matrix, 0, Eigen::OuterStride<>>;
using StridedMutMap = Eigen::Map<Matrix, 0, Eigen::OuterStride<>>;

}  // namespace

Var temporal_attention(Var q, Var k, Var v, Index steps, Index num_nodes, int heads) {
  require_same_tape(q, k);
  require_same_tape(q, v);
  const Index rows = q.rows();
  const Index width = q.cols();
  if (k.rows() != rows || v.rows() != rows || k.cols() != width || v.cols() != width) {
    throw ShapeError("temporal_attention: q/k/v shapes differ");
  }
  if (steps <= 0 || num_nodes <= 0 || rows % (steps * num_nodes) != 0) {
    throw ShapeError("temporal_attention: " + std::to_string(rows) + " rows not divisible by T*N");
  }
  if (heads <= 0 || width % heads != 0) {
    throw ShapeError("temporal_attention: width " + std::to_string(width) +
                     " not divisible by heads " + std::to_string(heads));
  }
  const Index batch = rows / (steps * num_nodes);
  const Index hd = width / heads;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(hd));
  const Eigen::OuterStride<> stride(num_nodes * width);

  Matrix out(rows, width);
  // One T x T weight matrix per (b, n, head), kept for the backward pass.
  std::vector<Matrix> weights(static_cast<std::size_t>(batch * num_nodes * heads));
  for (Index b = 0; b < batch; ++b) {
    for (Index n = 0; n < num_nodes; ++n) {
      const Index base = (b * steps) * num_nodes + n;
      StridedMap qs(q.value().data() + base * width, steps, width, stride);
      StridedMap ks(k.value().data() + base * width, steps, width, stride);
      StridedMap vs(v.value().data() + base * width, steps, width, stride);
      StridedMutMap os(out.data() + base * width, steps, width, stride);
      for (int h = 0; h < heads; ++h) {
        Matrix logits = (qs.middleCols(h * hd, hd) * ks.middleCols(h * hd, hd).transpose()) * inv_scale;
        Matrix w = mip::row_softmax(logits);
        os.middleCols(h * hd, hd).noalias() = w * vs.middleCols(h * hd, hd);
        weights[static_cast<std::size_t>((b * num_nodes + n) * heads + h)] = std::move(w);
      }
    }
  }
  return q.tape->record(
      std::move(out), {q, k, v},
      [q, k, v, steps, num_nodes, heads, batch, hd, inv_scale, width,
       weights = std::move(weights)](Tape& t, const Matrix& g, const Matrix&) {
        const Index rows = g.rows();
        Matrix dq = Matrix::Zero(rows, width);
        Matrix dk = Matrix::Zero(rows, width);
        Matrix dv = Matrix::Zero(rows, width);
        const Eigen::OuterStride<> stride(num_nodes * width);
        for (Index b = 0; b < batch; ++b) {
          for (Index n = 0; n < num_nodes; ++n) {
            const Index base = (b * steps) * num_nodes + n;
            StridedMap qs(q.value().data() + base * width, steps, width, stride);
            StridedMap ks(k.value().data() + base * width, steps, width, stride);
            StridedMap vs(v.value().data() + base * width, steps, width, stride);
            StridedMap gs(g.data() + base * width, steps, width, stride);
            StridedMutMap dqs(dq.data() + base * width, steps, width, stride);
            StridedMutMap dks(dk.data() + base * width, steps, width, stride);
            StridedMutMap dvs(dv.data() + base * width, steps, width, stride);
            for (int h = 0; h < heads; ++h) {
              const Matrix& w = weights[static_cast<std::size_t>((b * num_nodes + n) * heads + h)];
              const auto go = gs.middleCols(h * hd, hd);
              dvs.middleCols(h * hd, hd).noalias() = w.transpose() * go;
              const Matrix dw = go * vs.middleCols(h * hd, hd).transpose();
              const Eigen::VectorXd dot = (dw.array() * w.array()).rowwise().sum();
              const Matrix dl = (w.array() * (dw.colwise() - dot).array()).matrix() * inv_scale;
              dqs.middleCols(h * hd, hd).noalias() = dl * ks.middleCols(h * hd, hd);
              dks.middleCols(h * hd, hd).noalias() = dl.transpose() * qs.middleCols(h * hd, hd);
            }
          }
        }
        t.accumulate(q, dq);
        t.accumulate(k, dk);
        t.accumulate(v, dv);
      });
}

}  // namespace ag

Matrix attention_weights(const Matrix& series, const Matrix& wq, const Matrix& wk) {
  const Matrix q = series * wq;
  const Matrix k = series * wk;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(wq.cols()));
  return row_softmax((q * k.transpose()) * inv_scale);
}

}  // namespace mip
