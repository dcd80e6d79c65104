#pragma once

#include <random>
#include <utility>
#include <vector>

#include "mip/autograd.hpp"
#include "mip/tensor.hpp"

namespace mip {

/// M x d prototype matrix. Requires M >= 2 and finite entries.
class MemoryBank {
 public:
  explicit MemoryBank(Matrix prototypes);

  /// Entries i.i.d. uniform on [-1/sqrt(d), 1/sqrt(d)].
  static MemoryBank random(Index num_prototypes, Index dim, std::mt19937_64& rng);

  const Matrix& prototypes() const { return prototypes_; }
  Index num_prototypes() const { return prototypes_.rows(); }
  Index dim() const { return prototypes_.cols(); }

 private:
  Matrix prototypes_;
};

struct QueryParams {
  Matrix weight;   // k x d
  RowVector bias;  // d
};

/// Scores (N x M, rows on the simplex) and the prompts they aggregate (N x d).
struct PromptExtraction {
  Matrix scores;
  Matrix prompts;
};

/// X_t W_Q + b_Q.
Matrix project_query(const Matrix& features, const QueryParams& params);

/// S_I = softmax(Q Phi^T), H_I = S_I Phi.
PromptExtraction extract_invariant(const Matrix& query, const MemoryBank& bank);
/// S_V = softmax(-Q Phi^T), H_V = S_V Phi.
PromptExtraction extract_variant(const Matrix& query, const MemoryBank& bank);

struct PromptSet {
  PromptTensor invariant;
  PromptTensor variant;
  std::vector<Matrix> invariant_scores;  // one N x M matrix per step
  std::vector<Matrix> variant_scores;
};

/// Runs the query projection and both extractions for each of the T steps
/// of a single-sample input (inputs.batch must be 1).
PromptSet extract_prompts(const FlowTensor& inputs, const QueryParams& params,
                          const MemoryBank& bank);

/// Indices of the largest and second-largest entries; ties go to the lower
/// index.
std::pair<Index, Index> top_two(const Eigen::Ref<const RowVector>& scores);

/// Sum over slots of max(|h - phi_a|^2 - |h - phi_b|^2 + margin, 0) + |h - phi_a|^2
/// where a, b are the top-two prototypes by invariant score.
double memory_regularization(const PromptTensor& invariant, const std::vector<Matrix>& scores,
                             const MemoryBank& bank, double margin);

/// Tape version over stacked prompts (rows x d). `scores` picks a and b per
/// row and is treated as constant. The summed loss is multiplied by `weight`.
Var memory_regularization(Var prompts, Var bank, const Matrix& scores, double margin,
                          double weight = 1.0);

}  // namespace mip
