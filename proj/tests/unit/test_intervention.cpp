#include <algorithm>
#include <set>

#include "doctest.h"
#include "mip/intervention.hpp"
#include "support.hpp"

using namespace mip;

namespace {

PromptTensor random_variant(Index t, Index n, Index d, std::mt19937_64& rng) {
  PromptTensor p;
  p.steps = t;
  p.nodes = n;
  p.dim = d;
  p.values = test::random_matrix(t * n, d, rng);
  p.kind = PromptKind::variant;
  return p;
}

bool disjoint(const std::vector<SlotSwap>& swaps, Index nodes) {
  std::set<Index> used;
  for (const auto& s : swaps) {
    const Index a = s.step_a * nodes + s.node_a;
    const Index b = s.step_b * nodes + s.node_b;
    if (a == b || !used.insert(a).second || !used.insert(b).second) return false;
  }
  return true;
}

// Seeds whose draws touch pairwise distinct slots.
std::vector<std::uint64_t> disjoint_seeds(Index t, Index n, double ratio, int count) {
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t seed = 0; static_cast<int>(seeds.size()) < count; ++seed) {
    std::mt19937_64 rng(seed);
    if (disjoint(sample_swaps(t, n, ratio, rng), n)) seeds.push_back(seed);
  }
  return seeds;
}

std::vector<std::vector<double>> sorted_rows(const Matrix& m) {
  std::vector<std::vector<double>> rows;
  for (Index r = 0; r < m.rows(); ++r) rows.emplace_back(m.row(r).data(), m.row(r).data() + m.cols());
  std::sort(rows.begin(), rows.end());
  return rows;
}

}  // namespace

TEST_CASE("swap counts") {
  CHECK(swap_count(7, 0.25) == 0);
  CHECK(swap_count(8, 0.25) == 1);
  CHECK(swap_count(100, 0.5) == 25);
  CHECK(swap_count(50, 0.14) == 3);
  CHECK(swap_count(10, 0.0) == 0);
  CHECK(swap_count(10, 1.0) == 5);
  CHECK_THROWS_AS(swap_count(10, 1.5), DomainError);
  CHECK_THROWS_AS(swap_count(10, -0.1), DomainError);
}

TEST_CASE("sampler draws the requested number of swaps") {
  for (const auto& [n, r, expected] : {std::tuple{Index{7}, 0.25, Index{0}}, std::tuple{Index{8}, 0.25, Index{1}},
                                        std::tuple{Index{100}, 0.5, Index{25}}}) {
    std::mt19937_64 rng(3);
    CHECK(static_cast<Index>(sample_swaps(4, n, r, rng).size()) == expected);
  }
}

TEST_CASE("zero ratio is the identity") {
  std::mt19937_64 rng(1);
  const PromptTensor h = random_variant(3, 9, 4, rng);
  const PromptTensor out = intervene(h, InterventionConfig{0.0, 42});
  CHECK(out.values == h.values);
  const PromptTensor seven = random_variant(2, 7, 3, rng);
  CHECK(intervene(seven, InterventionConfig{0.25, 5}).values == seven.values);
}

TEST_CASE("single swap matches a replay of the sampler") {
  std::mt19937_64 gen(2);
  const PromptTensor h = random_variant(2, 8, 3, gen);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const PromptTensor out = intervene(h, InterventionConfig{0.25, seed});

    std::mt19937_64 replay(seed);
    std::uniform_int_distribution<Index> node(0, 7), step(0, 1);
    const Index w = node(replay), v = node(replay), i = step(replay), j = step(replay);
    const Index a = i * 8 + w, b = j * 8 + v;
    for (Index r = 0; r < 16; ++r) {
      if (r == a) {
        CHECK(out.values.row(r) == h.values.row(b));
      } else if (r == b) {
        CHECK(out.values.row(r) == h.values.row(a));
      } else {
        CHECK(out.values.row(r) == h.values.row(r));
      }
    }
  }
}

TEST_CASE("input is left untouched and output is deterministic") {
  std::mt19937_64 gen(3);
  const PromptTensor h = random_variant(3, 20, 2, gen);
  const Matrix before = h.values;
  const PromptTensor a = intervene(h, InterventionConfig{0.5, 7});
  const PromptTensor b = intervene(h, InterventionConfig{0.5, 7});
  CHECK(h.values == before);
  CHECK(a.values == b.values);
}

TEST_CASE("intervention errors") {
  std::mt19937_64 gen(4);
  PromptTensor h = random_variant(2, 4, 2, gen);
  CHECK_THROWS_AS(intervene(h, InterventionConfig{1.2, 0}), DomainError);
  h.kind = PromptKind::invariant;
  CHECK_THROWS_AS(intervene(h, InterventionConfig{0.5, 0}), ContractError);
}

TEST_CASE("disjoint swaps preserve the multiset and are involutions") {
  std::mt19937_64 gen(5);
  for (const auto& [t, n, r] : {std::tuple{Index{3}, Index{20}, 0.5}, std::tuple{Index{2}, Index{8}, 0.25},
                                 std::tuple{Index{4}, Index{40}, 1.0}}) {
    const PromptTensor h = random_variant(t, n, 3, gen);
    for (std::uint64_t seed : disjoint_seeds(t, n, r, 10)) {
      const InterventionConfig cfg{r, seed};
      const PromptTensor once = intervene(h, cfg);
      CHECK(sorted_rows(once.values) == sorted_rows(h.values));
      CHECK(intervene(once, cfg).values == h.values);
    }
  }
}

TEST_CASE("at most two slots per swap change") {
  std::mt19937_64 gen(6);
  for (int trial = 0; trial < 100; ++trial) {
    const Index t = test::random_index(gen, 1, 5);
    const Index n = test::random_index(gen, 1, 30);
    const double r = std::uniform_real_distribution<double>(0.0, 1.0)(gen);
    const PromptTensor h = random_variant(t, n, 2, gen);
    const PromptTensor out = intervene(h, InterventionConfig{r, gen()});
    Index changed = 0;
    for (Index row = 0; row < h.values.rows(); ++row) changed += out.values.row(row) != h.values.row(row);
    CHECK(changed <= 2 * swap_count(n, r));
  }
}

TEST_CASE("row map reads from the original tensor") {
  // Overlapping swaps: later writes win, every read is from the input.
  const std::vector<SlotSwap> swaps = {{0, 0, 0, 1}, {0, 1, 0, 2}};
  const auto map = swap_row_map(1, 3, swaps);
  CHECK(map == std::vector<Index>{1, 2, 1});
}
