#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "mip/tensor.hpp"

namespace mip {

struct InterventionConfig {
  double ratio = 0.25;
  std::uint64_t seed = 0;

  /// Throws DomainError unless 0 <= ratio <= 1.
  void validate() const;
};

/// One exchange between slot (step_a, node_a) and slot (step_b, node_b).
struct SlotSwap {
  Index step_a = 0;
  Index node_a = 0;
  Index step_b = 0;
  Index node_b = 0;
};

/// floor(ratio * N / 2)
Index swap_count(Index nodes, double ratio);

/// Draws swap_count(nodes, ratio) swaps with replacement. Per swap the draw
/// order is node_a, node_b, step_a, step_b, each uniform, from a
/// std::mt19937_64 stream.
std::vector<SlotSwap> sample_swaps(Index steps, Index nodes, double ratio, std::mt19937_64& rng);

/// Row map for the swapped copy: output row r reads input row map[r]. Every
/// write reads from the original tensor, later swaps overwrite earlier ones.
std::vector<Index> swap_row_map(Index steps, Index nodes, const std::vector<SlotSwap>& swaps);

/// Exchanges whole d-vectors of a variant prompt tensor between random
/// (time, node) slots. The input is not modified.
PromptTensor intervene(const PromptTensor& variant, const InterventionConfig& config);
PromptTensor intervene(const PromptTensor& variant, double ratio, std::mt19937_64& rng);

}  // namespace mip
