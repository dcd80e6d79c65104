#include <cmath>
#include <numeric>

#include "doctest.h"
#include "mip/memory.hpp"
#include "support.hpp"

using namespace mip;

namespace {

Matrix row(std::initializer_list<double> v) {
  Matrix m(1, static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) m(0, i++) = x;
  return m;
}

PromptTensor single_slot(const Matrix& h) {
  PromptTensor p;
  p.steps = 1;
  p.nodes = h.rows();
  p.dim = h.cols();
  p.values = h;
  return p;
}

// Per-row hinge arguments for the kink check.
Eigen::VectorXd hinge_args(const Matrix& h, const Matrix& phi, const Matrix& scores, double margin) {
  Eigen::VectorXd out(h.rows());
  for (Index r = 0; r < h.rows(); ++r) {
    const auto [a, b] = top_two(scores.row(r));
    out(r) = (h.row(r) - phi.row(a)).squaredNorm() - (h.row(r) - phi.row(b)).squaredNorm() + margin;
  }
  return out;
}

}  // namespace

TEST_CASE("query projection") {
  const QueryParams identity{Matrix::Identity(2, 2), RowVector::Zero(2)};
  const Matrix x = row({0.5, -2.0});
  CHECK(project_query(x, identity) == x);

  const QueryParams bias_only{Matrix::Ones(3, 2), RowVector{{1.0, 2.0}}};
  const Matrix q = project_query(Matrix::Zero(4, 3), bias_only);
  for (Index r = 0; r < 4; ++r) CHECK(q.row(r) == row({1.0, 2.0}));

  Matrix w(2, 2);
  w << 1, 0, 0, 2;
  CHECK(project_query(row({1, 1}), {w, RowVector{{1.0, 1.0}}}) == row({2, 3}));
  CHECK_THROWS_AS(project_query(Matrix::Zero(1, 3), identity), ShapeError);
}

TEST_CASE("memory bank validation") {
  CHECK_THROWS_AS(MemoryBank(Matrix::Ones(1, 3)), ConfigError);
  Matrix bad = Matrix::Ones(2, 2);
  bad(1, 1) = INFINITY;
  CHECK_THROWS_AS(MemoryBank{bad}, DomainError);
  std::mt19937_64 rng(0);
  const MemoryBank bank = MemoryBank::random(5, 4, rng);
  CHECK(bank.prototypes().cwiseAbs().maxCoeff() <= 0.5);
}

TEST_CASE("invariant and variant extraction with a dominant prototype") {
  Matrix phi(2, 2);
  phi << 10, 0, 0, 10;
  const MemoryBank bank(phi);
  const Matrix q = row({10, 0});
  const double hi = 1.0 / (1.0 + std::exp(-100.0));
  const double lo = 1.0 - hi;

  const auto inv = extract_invariant(q, bank);
  CHECK(std::abs(inv.scores(0, 0) - hi) <= 1e-15);
  CHECK(std::abs(inv.scores(0, 1) - lo) <= 1e-15);
  CHECK(std::abs(inv.prompts(0, 0) - 10.0 * hi) <= 1e-12);
  CHECK(std::abs(inv.prompts(0, 1) - 10.0 * lo) <= 1e-12);

  const auto var = extract_variant(q, bank);
  CHECK(std::abs(var.scores(0, 0) - lo) <= 1e-15);
  CHECK(std::abs(var.scores(0, 1) - hi) <= 1e-15);
  CHECK(std::abs(var.prompts(0, 1) - 10.0 * hi) <= 1e-12);
}

TEST_CASE("zero query gives uniform scores and the prototype mean") {
  std::mt19937_64 rng(2);
  const MemoryBank bank(test::random_matrix(5, 3, rng));
  const Matrix q = Matrix::Zero(4, 3);
  const auto inv = extract_invariant(q, bank);
  const auto var = extract_variant(q, bank);
  CHECK((inv.scores.array() - 0.2).abs().maxCoeff() <= 1e-15);
  CHECK(inv.scores == var.scores);
  const RowVector mean = bank.prototypes().colwise().mean();
  for (Index r = 0; r < 4; ++r) CHECK((inv.prompts.row(r) - mean).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK_THROWS_AS(extract_invariant(Matrix::Zero(1, 2), bank), ShapeError);
}

TEST_CASE("variant argmax is the invariant logit argmin") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const MemoryBank bank(test::random_matrix(6, 4, rng));
    const Matrix q = test::random_matrix(3, 4, rng, -2, 2);
    const Matrix logits = q * bank.prototypes().transpose();
    const auto var = extract_variant(q, bank);
    for (Index r = 0; r < 3; ++r) {
      Index argmax = 0, argmin = 0;
      var.scores.row(r).maxCoeff(&argmax);
      logits.row(r).minCoeff(&argmin);
      CHECK(argmax == argmin);
    }
  }
}

TEST_CASE("prompts stay inside the prototype bounding box") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    const Index m = test::random_index(rng, 2, 8);
    const Index d = test::random_index(rng, 1, 6);
    const MemoryBank bank(test::random_matrix(m, d, rng, -5, 5));
    const Matrix q = test::random_matrix(7, d, rng, -10, 10);
    const RowVector lo = bank.prototypes().colwise().minCoeff();
    const RowVector hi = bank.prototypes().colwise().maxCoeff();
    for (const auto& ex : {extract_invariant(q, bank), extract_variant(q, bank)}) {
      CHECK((ex.scores.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-9);
      CHECK(ex.scores.minCoeff() >= 0.0);
      for (Index r = 0; r < q.rows(); ++r) {
        CHECK(((ex.prompts.row(r) - lo).array() >= -1e-12).all());
        CHECK(((hi - ex.prompts.row(r)).array() >= -1e-12).all());
      }
    }
  }
}

TEST_CASE("extraction agrees for equal logits") {
  // Prototypes orthogonal to the query give equal logits in every row.
  Matrix phi(3, 2);
  phi << 0, 1, 0, -2, 0, 5;
  const Matrix q = Matrix::Constant(2, 2, 0.0).rowwise() + RowVector{{3.0, 0.0}};
  const MemoryBank bank(phi);
  CHECK(extract_invariant(q, bank).prompts == extract_variant(q, bank).prompts);
}

TEST_CASE("extract_prompts stacks per-step results") {
  std::mt19937_64 rng(6);
  const Index t = 4, n = 3, k = 2, d = 3;
  const MemoryBank bank(test::random_matrix(5, d, rng));
  const QueryParams qp{test::random_matrix(k, d, rng), test::random_matrix(1, d, rng)};
  FlowTensor x = FlowTensor::zeros(1, t, n, k);
  x.values = test::random_matrix(t * n, k, rng);
  const PromptSet set = extract_prompts(x, qp, bank);
  CHECK(set.invariant.values.rows() == t * n);
  CHECK(set.invariant.values.cols() == d);
  CHECK(set.variant.values.rows() == t * n);
  CHECK(set.invariant.kind == PromptKind::invariant);
  CHECK(set.variant.kind == PromptKind::variant);
  REQUIRE(set.invariant_scores.size() == static_cast<std::size_t>(t));

  // Reversing the step order reverses the output, step by step.
  FlowTensor rev = x;
  for (Index s = 0; s < t; ++s) rev.values.middleRows((t - 1 - s) * n, n) = x.values.middleRows(s * n, n);
  const PromptSet rset = extract_prompts(rev, qp, bank);
  for (Index s = 0; s < t; ++s) {
    const Matrix step = x.values.middleRows(s * n, n);
    const auto oracle = extract_invariant(project_query(step, qp), bank);
    CHECK(set.invariant.values.middleRows(s * n, n) == oracle.prompts);
    CHECK(rset.invariant.values.middleRows((t - 1 - s) * n, n) == oracle.prompts);
    CHECK(rset.variant.values.middleRows((t - 1 - s) * n, n) == set.variant.values.middleRows(s * n, n));
  }

  FlowTensor batched = FlowTensor::zeros(2, t, n, k);
  CHECK_THROWS_AS(extract_prompts(batched, qp, bank), ShapeError);
}

TEST_CASE("top two breaks ties toward the lower index") {
  CHECK(top_two(RowVector{{0.2, 0.5, 0.3}}) == std::pair<Index, Index>{1, 2});
  CHECK(top_two(RowVector{{0.4, 0.4, 0.2}}) == std::pair<Index, Index>{0, 1});
  CHECK(top_two(RowVector{{0.1, 0.3, 0.3, 0.3}}) == std::pair<Index, Index>{1, 2});
  CHECK_THROWS_AS(top_two(RowVector{{1.0}}), ConfigError);
}

TEST_CASE("regularization hand cases") {
  Matrix phi(2, 1);
  phi << 0, 3;
  const MemoryBank bank(phi);
  const std::vector<Matrix> scores = {row({0.9, 0.1})};
  // hinge max(1 - 4 + 1, 0) = 0, alignment 1
  CHECK(memory_regularization(single_slot(row({1.0})), scores, bank, 1.0) == 1.0);

  // Exactly on the winning prototype with the runner-up far enough away.
  CHECK(memory_regularization(single_slot(row({0.0})), scores, bank, 1.0) == 0.0);

  Matrix same(2, 2);
  same << 1, 2, 1, 2;
  CHECK(memory_regularization(single_slot(row({1, 2})), {row({0.5, 0.5})}, MemoryBank(same), 0.0) == 0.0);

  PromptTensor wrong = single_slot(row({1.0}));
  wrong.kind = PromptKind::variant;
  CHECK_THROWS_AS(memory_regularization(wrong, scores, bank, 1.0), ContractError);
}

TEST_CASE("regularization sums over slots and matches the tape version") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    const Index t = 2, n = 3, m = 4, d = 3;
    const MemoryBank bank(test::random_matrix(m, d, rng));
    PromptTensor h;
    h.steps = t;
    h.nodes = n;
    h.dim = d;
    h.values = test::random_matrix(t * n, d, rng);
    std::vector<Matrix> scores;
    Matrix stacked(t * n, m);
    double oracle = 0.0;
    for (Index s = 0; s < t; ++s) {
      Matrix sc = row_softmax(test::random_matrix(n, m, rng, -3, 3));
      stacked.middleRows(s * n, n) = sc;
      scores.push_back(sc);
      for (Index i = 0; i < n; ++i) {
        const auto [a, b] = top_two(sc.row(i));
        const RowVector x = h.values.row(s * n + i);
        const double da = (x - bank.prototypes().row(a)).squaredNorm();
        const double db = (x - bank.prototypes().row(b)).squaredNorm();
        oracle += std::max(da - db + 0.5, 0.0) + da;
      }
    }
    const double plain = memory_regularization(h, scores, bank, 0.5);
    CHECK(plain == doctest::Approx(oracle).epsilon(1e-12));
    Tape tape(false);
    const Var v = memory_regularization(tape.constant(h.values), tape.constant(bank.prototypes()), stacked, 0.5, 0.25);
    CHECK(v.scalar() == doctest::Approx(0.25 * oracle).epsilon(1e-12));
  }
}

TEST_CASE("regularization is continuous at score ties") {
  Matrix phi(3, 2);
  phi << 0, 0, 1, 0, 0, 1;
  const MemoryBank bank(phi);
  const std::vector<Matrix> tied = {row({0.4, 0.4, 0.2})};
  const Matrix h = row({0.3, 0.2});
  const double base = memory_regularization(single_slot(h), tied, bank, 1.0);
  for (double eps : {1e-4, 1e-6, 1e-8}) {
    const Matrix moved = h + row({eps, -eps});
    CHECK(std::abs(memory_regularization(single_slot(moved), tied, bank, 1.0) - base) <= 10 * eps);
  }
}

TEST_CASE("regularization gradients match finite differences") {
  std::mt19937_64 rng(23);
  const double margin = 1.0;
  int checked = 0;
  while (checked < 10) {
    const Index rows = 6, m = 4, d = 3;
    const Matrix phi = test::random_matrix(m, d, rng);
    const Matrix h = test::random_matrix(rows, d, rng);
    const Matrix scores = row_softmax(test::random_matrix(rows, m, rng, -2, 2));
    if (hinge_args(h, phi, scores, margin).cwiseAbs().minCoeff() <= 1e-3) continue;
    ++checked;
    ParameterStore ps;
    ps.add("bank", phi);
    ps.add("h", h);
    const test::ScalarFn f = [&](Tape& tape, ParameterStore& p) {
      return memory_regularization(tape.param(p.at("h")), tape.param(p.at("bank")), scores, margin, 0.5);
    };
    CHECK(test::max_grad_error(f, ps) < 1e-4);
  }
}
