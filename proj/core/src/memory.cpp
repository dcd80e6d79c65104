#include "mip/memory.hpp"

#include <cmath>

namespace mip {

MemoryBank::MemoryBank(Matrix prototypes) : prototypes_(std::move(prototypes)) {
  if (prototypes_.rows() < 2) {
    throw ConfigError("memory bank needs at least 2 prototypes, got " +
                      std::to_string(prototypes_.rows()));
  }
  if (prototypes_.cols() < 1) throw ShapeError("memory bank dimension must be positive");
  if (!prototypes_.allFinite()) throw DomainError("memory bank has non-finite entries");
}

MemoryBank MemoryBank::random(Index num_prototypes, Index dim, std::mt19937_64& rng) {
  if (dim < 1) throw ShapeError("memory bank dimension must be positive");
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  std::uniform_real_distribution<double> u(-bound, bound);
  Matrix m(num_prototypes, dim);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return MemoryBank(std::move(m));
}

Matrix project_query(const Matrix& features, const QueryParams& params) {
  if (features.cols() != params.weight.rows()) {
    throw ShapeError("project_query: features have " + std::to_string(features.cols()) +
                     " columns, weight expects " + std::to_string(params.weight.rows()));
  }
  if (params.bias.size() != params.weight.cols()) {
    throw ShapeError("project_query: bias length does not match weight columns");
  }
  return (features * params.weight).rowwise() + params.bias;
}

namespace {

PromptExtraction extract(const Matrix& query, const MemoryBank& bank, double sign) {
  if (query.cols() != bank.dim()) {
    throw ShapeError("prompt extraction: query dim " + std::to_string(query.cols()) +
                     " vs bank dim " + std::to_string(bank.dim()));
  }
  Matrix scores = row_softmax(sign * (query * bank.prototypes().transpose()));
  Matrix prompts = scores * bank.prototypes();
  return {std::move(scores), std::move(prompts)};
}

}  // namespace

PromptExtraction extract_invariant(const Matrix& query, const MemoryBank& bank) {
  return extract(query, bank, 1.0);
}

PromptExtraction extract_variant(const Matrix& query, const MemoryBank& bank) {
  return extract(query, bank, -1.0);
}

PromptSet extract_prompts(const FlowTensor& inputs, const QueryParams& params,
                          const MemoryBank& bank) {
  inputs.check();
  if (inputs.batch != 1) throw ShapeError("extract_prompts expects a single sample");
  const Index steps = inputs.steps;
  const Index nodes = inputs.nodes;
  const Index d = bank.dim();
  PromptSet out{
      PromptTensor{steps, nodes, d, Matrix(steps * nodes, d), PromptKind::invariant},
      PromptTensor{steps, nodes, d, Matrix(steps * nodes, d), PromptKind::variant},
      {},
      {}};
  for (Index t = 0; t < steps; ++t) {
    const Matrix query = project_query(inputs.values.middleRows(t * nodes, nodes), params);
    auto inv = extract_invariant(query, bank);
    auto var = extract_variant(query, bank);
    out.invariant.values.middleRows(t * nodes, nodes) = inv.prompts;
    out.variant.values.middleRows(t * nodes, nodes) = var.prompts;
    out.invariant_scores.push_back(std::move(inv.scores));
    out.variant_scores.push_back(std::move(var.scores));
  }
  return out;
}

std::pair<Index, Index> top_two(const Eigen::Ref<const RowVector>& scores) {
  if (scores.size() < 2) throw ConfigError("top_two needs at least 2 scores");
  Index a = 0;
  for (Index m = 1; m < scores.size(); ++m) {
    if (scores(m) > scores(a)) a = m;
  }
  Index b = a == 0 ? 1 : 0;
  for (Index m = 0; m < scores.size(); ++m) {
    if (m != a && scores(m) > scores(b)) b = m;
  }
  return {a, b};
}

double memory_regularization(const PromptTensor& invariant, const std::vector<Matrix>& scores,
                             const MemoryBank& bank, double margin) {
  if (invariant.kind != PromptKind::invariant) {
    throw ContractError("memory regularization is defined on invariant prompts");
  }
  if (static_cast<Index>(scores.size()) != invariant.steps) {
    throw ShapeError("memory regularization: one score matrix per step is required");
  }
  const Matrix& phi = bank.prototypes();
  double total = 0.0;
  for (Index t = 0; t < invariant.steps; ++t) {
    expect_shape(scores[static_cast<std::size_t>(t)], invariant.nodes, bank.num_prototypes(),
                 "invariant scores");
    for (Index n = 0; n < invariant.nodes; ++n) {
      const auto [a, b] = top_two(scores[static_cast<std::size_t>(t)].row(n));
      const RowVector h = invariant.slot(t, n);
      const double da = (h - phi.row(a)).squaredNorm();
      const double db = (h - phi.row(b)).squaredNorm();
      total += std::max(da - db + margin, 0.0) + da;
    }
  }
  return total;
}

Var memory_regularization(Var prompts, Var bank, const Matrix& scores, double margin,
                          double weight) {
  const Matrix& h = prompts.value();
  const Matrix& phi = bank.value();
  if (phi.rows() < 2) throw ConfigError("memory regularization needs at least 2 prototypes");
  if (h.cols() != phi.cols()) throw ShapeError("memory regularization: prompt/bank dims differ");
  expect_shape(scores, h.rows(), phi.rows(), "memory regularization scores");

  std::vector<std::pair<Index, Index>> picks(static_cast<std::size_t>(h.rows()));
  std::vector<char> active(static_cast<std::size_t>(h.rows()), 0);
  double total = 0.0;
  for (Index r = 0; r < h.rows(); ++r) {
    const auto ab = top_two(scores.row(r));
    picks[static_cast<std::size_t>(r)] = ab;
    const double da = (h.row(r) - phi.row(ab.first)).squaredNorm();
    const double db = (h.row(r) - phi.row(ab.second)).squaredNorm();
    const double hinge = da - db + margin;
    // Subgradient at exactly zero is taken as zero.
    active[static_cast<std::size_t>(r)] = hinge > 0.0 ? 1 : 0;
    total += std::max(hinge, 0.0) + da;
  }
  Matrix out(1, 1);
  out(0, 0) = weight * total;
  return prompts.tape->record(
      std::move(out), {prompts, bank},
      [prompts, bank, weight, picks = std::move(picks), active = std::move(active)](
          Tape& t, const Matrix& g, const Matrix&) {
        const Matrix& hv = prompts.value();
        const Matrix& pv = bank.value();
        const double s = g(0, 0) * weight;
        Matrix dh = Matrix::Zero(hv.rows(), hv.cols());
        Matrix dphi = Matrix::Zero(pv.rows(), pv.cols());
        for (Index r = 0; r < hv.rows(); ++r) {
          const auto [a, b] = picks[static_cast<std::size_t>(r)];
          const RowVector u = hv.row(r) - pv.row(a);
          // Alignment term.
          dh.row(r) += 2.0 * s * u;
          dphi.row(a) -= 2.0 * s * u;
          if (active[static_cast<std::size_t>(r)] != 0) {
            const RowVector w = hv.row(r) - pv.row(b);
            dh.row(r) += 2.0 * s * (u - w);
            dphi.row(a) -= 2.0 * s * u;
            dphi.row(b) += 2.0 * s * w;
          }
        }
        t.accumulate(prompts, dh);
        t.accumulate(bank, dphi);
      });
}

}  // namespace mip
