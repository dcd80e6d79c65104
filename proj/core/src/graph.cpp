#include "mip/graph.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>

#include "mip/csv.hpp"

namespace mip {

GeoGraph::GeoGraph(Matrix adjacency) : adjacency_(std::move(adjacency)) {
  if (adjacency_.rows() != adjacency_.cols() || adjacency_.rows() == 0) {
    throw ShapeError("adjacency must be square and non-empty, got " + shape_str(adjacency_));
  }
  for (Index i = 0; i < adjacency_.rows(); ++i) {
    for (Index j = 0; j < adjacency_.cols(); ++j) {
      const double w = adjacency_(i, j);
      if (!std::isfinite(w) || w < 0.0) {
        throw DomainError("adjacency entry (" + std::to_string(i) + "," + std::to_string(j) +
                          ") must be finite and nonnegative");
      }
    }
  }
}

GeoGraph GeoGraph::grid(Index rows, Index cols) {
  if (rows <= 0 || cols <= 0) throw DomainError("grid dimensions must be positive");
  const Index n = rows * cols;
  Matrix a = Matrix::Zero(n, n);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      const Index i = r * cols + c;
      if (r + 1 < rows) a(i, i + cols) = a(i + cols, i) = 1.0;
      if (c + 1 < cols) a(i, i + 1) = a(i + 1, i) = 1.0;
    }
  }
  return GeoGraph(std::move(a));
}

namespace {

Matrix row_normalize(const Matrix& a) {
  Matrix out = Matrix::Zero(a.rows(), a.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    const double degree = a.row(i).sum();
    if (degree > 0.0) out.row(i) = a.row(i) / degree;
  }
  return out;
}

}  // namespace

TransitionPair build_transitions(const GeoGraph& graph) {
  const Matrix& a = graph.adjacency();
  return TransitionPair{row_normalize(a), row_normalize(a.transpose())};
}

TransitionPair build_transitions(const Matrix& adjacency) {
  return build_transitions(GeoGraph(adjacency));
}

std::vector<SparseMatrix> transition_powers(const Matrix& transition, int order) {
  std::vector<SparseMatrix> powers;
  if (order <= 0) return powers;
  const SparseMatrix base = transition.sparseView();
  powers.push_back(base);
  for (int z = 2; z <= order; ++z) {
    SparseMatrix next = powers.back() * base;
    next.prune(0.0);
    powers.push_back(std::move(next));
  }
  return powers;
}

Matrix build_semantic_adjacency(const Matrix& bank, const SemanticGraphParams& params) {
  if (params.proj_a.cols() != bank.rows() || params.proj_b.cols() != bank.rows() ||
      params.proj_a.rows() != params.proj_b.rows()) {
    throw ShapeError("semantic projections " + shape_str(params.proj_a) + "/" +
                     shape_str(params.proj_b) + " do not match memory bank " + shape_str(bank));
  }
  const Matrix e1 = params.proj_a * bank;
  const Matrix e2 = params.proj_b * bank;
  return row_softmax(e1 * e2.transpose());
}

Var semantic_adjacency(Var bank, Var proj_a, Var proj_b) {
  if (proj_a.cols() != bank.rows() || proj_b.cols() != bank.rows() ||
      proj_a.rows() != proj_b.rows()) {
    throw ShapeError("semantic projections " + shape_str(proj_a.value()) + "/" +
                     shape_str(proj_b.value()) + " do not match memory bank " +
                     shape_str(bank.value()));
  }
  const Var e1 = ag::matmul(proj_a, bank);
  const Var e2 = ag::matmul(proj_b, bank);
  return ag::row_softmax(ag::matmul_nt(e1, e2));
}

GeoGraph read_adjacency_csv(const std::filesystem::path& path) {
  const auto rows = read_numeric_csv(path);
  if (rows.empty()) throw DataError(path.string() + ": adjacency file is empty");
  const auto n = static_cast<Index>(rows.size());
  Matrix a(n, n);
  for (Index i = 0; i < n; ++i) {
    const auto& row = rows[static_cast<std::size_t>(i)];
    if (static_cast<Index>(row.size()) != n) {
      throw DataError(path.string() + ": row " + std::to_string(i + 1) + " has " +
                      std::to_string(row.size()) + " values, expected " + std::to_string(n));
    }
    for (Index j = 0; j < n; ++j) a(i, j) = row[static_cast<std::size_t>(j)];
  }
  try {
    return GeoGraph(std::move(a));
  } catch (const DomainError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_adjacency_csv(const std::filesystem::path& path, const GeoGraph& graph) {
  write_numeric_csv(path, graph.adjacency());
}

GeoGraph random_geometric_graph(Index nodes, double radius, std::mt19937_64& rng) {
  if (nodes < 2) throw ConfigError("random geometric graph needs at least 2 nodes");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Matrix pos(nodes, 2);
  for (Index i = 0; i < pos.size(); ++i) pos.data()[i] = unit(rng);
  Matrix adj = Matrix::Zero(nodes, nodes);
  for (Index i = 0; i < nodes; ++i) {
    Index nearest = -1;
    double best = 0.0;
    for (Index j = 0; j < nodes; ++j) {
      if (i == j) continue;
      const double dist = (pos.row(i) - pos.row(j)).norm();
      if (dist < radius) adj(i, j) = adj(j, i) = 1.0;
      if (nearest < 0 || dist < best) {
        nearest = j;
        best = dist;
      }
    }
    adj(i, nearest) = adj(nearest, i) = 1.0;
  }
  return GeoGraph(std::move(adj));
}

}  // namespace mip
