#pragma once

#include <filesystem>
#include <random>
#include <vector>

#include "mip/autograd.hpp"
#include "mip/common.hpp"

namespace mip {

/// Static sensor/region graph. adjacency(i, j) is the weight of edge i -> j.
class GeoGraph {
 public:
  GeoGraph() = default;
  /// Throws ShapeError for non-square input, DomainError for negative or
  /// non-finite weights.
  explicit GeoGraph(Matrix adjacency);

  Index num_nodes() const { return adjacency_.rows(); }
  const Matrix& adjacency() const { return adjacency_; }

  /// 4-neighbourhood grid graph over rows x cols cells, node = r * cols + c.
  static GeoGraph grid(Index rows, Index cols);

 private:
  Matrix adjacency_;
};

/// Uniform points in the unit square joined when closer than `radius`;
/// every node also links to its nearest neighbour. Symmetric, binary.
GeoGraph random_geometric_graph(Index nodes, double radius, std::mt19937_64& rng);

/// Forward/backward random-walk transition matrices.
struct TransitionPair {
  Matrix forward;
  Matrix backward;
};

/// P_f = D^-1 A, P_b = (D^T)^-1 A^T. Zero-degree rows stay zero.
TransitionPair build_transitions(const GeoGraph& graph);
/// Overload that validates a raw adjacency first.
TransitionPair build_transitions(const Matrix& adjacency);

/// Sparse powers P^1..P^order of a transition matrix, by iterated products.
std::vector<SparseMatrix> transition_powers(const Matrix& transition, int order);

struct SemanticGraphParams {
  Matrix proj_a;  // N x M
  Matrix proj_b;  // N x M
};

/// softmax_rows((W_A Phi)(W_B Phi)^T); plain-value version.
Matrix build_semantic_adjacency(const Matrix& bank, const SemanticGraphParams& params);

/// Differentiable version on a tape.
Var semantic_adjacency(Var bank, Var proj_a, Var proj_b);

/// Reads `adjacency.csv`: N lines of N comma-separated nonnegative reals.
GeoGraph read_adjacency_csv(const std::filesystem::path& path);
void write_adjacency_csv(const std::filesystem::path& path, const GeoGraph& graph);

}  // namespace mip
