#include <algorithm>
#include <numeric>

#include "doctest.h"
#include "mip/losses.hpp"
#include "support.hpp"

using namespace mip;

namespace {

FlowTensor flow(Index b, Index t, Index n, Index k, const Matrix& values) {
  FlowTensor f = FlowTensor::zeros(b, t, n, k);
  f.values = values;
  return f;
}

// Reference: per-slot mean |e| over valid features, then mean + l1 * population variance.
double invariant_oracle(const Matrix& pred, const Matrix& target, double l1, const Matrix* mask) {
  std::vector<double> l;
  for (Index r = 0; r < pred.rows(); ++r) {
    double s = 0.0, c = 0.0;
    for (Index j = 0; j < pred.cols(); ++j) {
      if (mask != nullptr && (*mask)(r, j) == 0.0) continue;
      s += std::abs(pred(r, j) - target(r, j));
      c += 1.0;
    }
    if (c > 0.0) l.push_back(s / c);
  }
  const double mean = std::accumulate(l.begin(), l.end(), 0.0) / static_cast<double>(l.size());
  double var = 0.0;
  for (double x : l) var += (x - mean) * (x - mean);
  return mean + l1 * var / static_cast<double>(l.size());
}

}  // namespace

TEST_CASE("elementwise loss") {
  const std::vector<double> p1 = {1, 3}, t1 = {1, 1};
  CHECK(elementwise_loss(p1, t1) == 1.0);
  CHECK(elementwise_loss(p1, p1) == 0.0);
  const std::vector<double> p2 = {-1}, t2 = {2};
  CHECK(elementwise_loss(p2, t2) == 3.0);
  CHECK_THROWS_AS(elementwise_loss(p1, t2), ShapeError);
}

TEST_CASE("task loss") {
  const FlowTensor p = flow(1, 1, 1, 2, Matrix{{1.0, 3.0}});
  const FlowTensor t = flow(1, 1, 1, 2, Matrix{{1.0, 1.0}});
  CHECK(task_loss(p, t) == 1.0);
  CHECK(task_loss(p, p) == 0.0);
  const Matrix mask{{1.0, 0.0}};
  CHECK(task_loss(p, t, &mask) == 0.0);
  const Matrix none{{0.0, 0.0}};
  CHECK_THROWS_AS(task_loss(p, t, &none), DomainError);
}

TEST_CASE("invariant loss hand cases") {
  // Two slots with element losses 1 and 3.
  const FlowTensor p = flow(1, 1, 2, 1, Matrix{{1.0}, {3.0}});
  const FlowTensor t = flow(1, 1, 2, 1, Matrix{{0.0}, {0.0}});
  CHECK(invariant_loss(p, t, 0.5) == 2.5);
  CHECK(invariant_loss(p, t, 0.0) == 2.0);
  const FlowTensor same = flow(1, 1, 2, 1, Matrix{{2.0}, {-2.0}});
  CHECK(invariant_loss(same, t, 10.0) == 2.0);
}

TEST_CASE("total loss arithmetic") {
  LossConfig cfg;
  cfg.lambda2 = 0.1;
  CHECK(total_loss(1, 2, 3, cfg) == doctest::Approx(3.3).epsilon(1e-15));
  cfg.lambda2 = 0.0;
  CHECK(total_loss(1, 2, 3, cfg) == 3.0);
  CHECK(total_loss(0, 0, 0, cfg) == 0.0);
  cfg.lambda1 = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("invariant loss matches the oracle and ignores slot order") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const Index b = test::random_index(rng, 1, 3), t = test::random_index(rng, 1, 4);
    const Index n = test::random_index(rng, 1, 5), k = test::random_index(rng, 1, 3);
    const Index rows = b * t * n;
    const Matrix pred = test::random_matrix(rows, k, rng, -3, 3);
    const Matrix target = test::random_matrix(rows, k, rng, -3, 3);
    Matrix mask = (test::random_matrix(rows, k, rng, 0, 1).array() > 0.3).cast<double>();
    mask(0, 0) = 1.0;
    const double l1 = std::uniform_real_distribution<double>(0, 2)(rng);
    const double got = invariant_loss(flow(b, t, n, k, pred), flow(b, t, n, k, target), l1, &mask);
    CHECK(got == doctest::Approx(invariant_oracle(pred, target, l1, &mask)).epsilon(1e-12));

    std::vector<Index> perm(static_cast<std::size_t>(rows));
    std::iota(perm.begin(), perm.end(), Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix pp(rows, k), pt(rows, k), pm(rows, k);
    for (Index r = 0; r < rows; ++r) {
      pp.row(r) = pred.row(perm[static_cast<std::size_t>(r)]);
      pt.row(r) = target.row(perm[static_cast<std::size_t>(r)]);
      pm.row(r) = mask.row(perm[static_cast<std::size_t>(r)]);
    }
    CHECK(invariant_loss(flow(b, t, n, k, pp), flow(b, t, n, k, pt), l1, &pm) ==
          doctest::Approx(got).epsilon(1e-12));
  }
}

TEST_CASE("variance term is nonnegative and vanishes only for equal slot losses") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix pred = test::random_matrix(6, 2, rng);
    const Matrix target = test::random_matrix(6, 2, rng);
    const FlowTensor p = flow(1, 2, 3, 2, pred), t = flow(1, 2, 3, 2, target);
    const double variance = invariant_loss(p, t, 1.0) - invariant_loss(p, t, 0.0);
    CHECK(variance >= 0.0);
    CHECK(variance > 0.0);  // random losses are never all equal
  }
  const Matrix target = Matrix::Zero(6, 1);
  Matrix pred(6, 1);
  pred << 1, -1, 1, -1, 1, -1;
  const FlowTensor p = flow(1, 2, 3, 1, pred), t = flow(1, 2, 3, 1, target);
  CHECK(invariant_loss(p, t, 1.0) - invariant_loss(p, t, 0.0) == 0.0);
}

TEST_CASE("tape losses agree with plain losses and have correct gradients") {
  std::mt19937_64 rng(3);
  const Matrix target = test::random_matrix(8, 2, rng);
  Matrix mask = Matrix::Ones(8, 2);
  mask(3, 1) = 0.0;
  mask(5, 0) = mask(5, 1) = 0.0;
  ParameterStore ps;
  ps.add("pred", test::random_matrix(8, 2, rng));
  {
    Tape tape(false);
    const Var p = tape.param(ps.at("pred"));
    const FlowTensor fp = flow(1, 2, 4, 2, ps.at("pred").value), ft = flow(1, 2, 4, 2, target);
    CHECK(task_loss(p, target, &mask).scalar() == doctest::Approx(task_loss(fp, ft, &mask)).epsilon(1e-14));
    CHECK(invariant_loss(p, target, 0.7, &mask).scalar() ==
          doctest::Approx(invariant_loss(fp, ft, 0.7, &mask)).epsilon(1e-14));
  }
  const test::ScalarFn task = [&](Tape& t, ParameterStore& p) { return task_loss(t.param(p.at("pred")), target, &mask); };
  const test::ScalarFn inv = [&](Tape& t, ParameterStore& p) {
    return invariant_loss(t.param(p.at("pred")), target, 0.7, &mask);
  };
  CHECK(test::max_grad_error(task, ps) < 1e-6);
  CHECK(test::max_grad_error(inv, ps) < 1e-6);
}

TEST_CASE("slot losses mark slots without valid features") {
  const Matrix pred{{1.0, 2.0}, {3.0, 4.0}};
  const Matrix target = Matrix::Zero(2, 2);
  const Matrix mask{{0.0, 0.0}, {1.0, 0.0}};
  const SlotLosses s = slot_losses(pred, target, &mask);
  CHECK(s.valid == std::vector<char>{0, 1});
  CHECK(s.values(1) == 3.0);
}
