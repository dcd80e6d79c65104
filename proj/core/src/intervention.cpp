#include "mip/intervention.hpp"

#include <cmath>
#include <numeric>

namespace mip {

void InterventionConfig::validate() const {
  if (!(ratio >= 0.0 && ratio <= 1.0)) {
    throw DomainError("intervention ratio must lie in [0, 1], got " + std::to_string(ratio));
  }
}

Index swap_count(Index nodes, double ratio) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) {
    throw DomainError("intervention ratio must lie in [0, 1], got " + std::to_string(ratio));
  }
  // The epsilon absorbs representation error such as 0.14 * 50 = 7.000000000000001 / 2.
  return static_cast<Index>(std::floor(ratio * static_cast<double>(nodes) / 2.0 + 1e-9));
}

std::vector<SlotSwap> sample_swaps(Index steps, Index nodes, double ratio, std::mt19937_64& rng) {
  if (steps <= 0 || nodes <= 0) throw ShapeError("intervention needs T, N > 0");
  const Index count = swap_count(nodes, ratio);
  std::uniform_int_distribution<Index> node_dist(0, nodes - 1);
  std::uniform_int_distribution<Index> step_dist(0, steps - 1);
  std::vector<SlotSwap> swaps;
  swaps.reserve(static_cast<std::size_t>(count));
  for (Index s = 0; s < count; ++s) {
    SlotSwap sw;
    sw.node_a = node_dist(rng);
    sw.node_b = node_dist(rng);
    sw.step_a = step_dist(rng);
    sw.step_b = step_dist(rng);
    swaps.push_back(sw);
  }
  return swaps;
}

std::vector<Index> swap_row_map(Index steps, Index nodes, const std::vector<SlotSwap>& swaps) {
  std::vector<Index> map(static_cast<std::size_t>(steps * nodes));
  std::iota(map.begin(), map.end(), Index{0});
  for (const SlotSwap& s : swaps) {
    const Index ra = s.step_a * nodes + s.node_a;
    const Index rb = s.step_b * nodes + s.node_b;
    map[static_cast<std::size_t>(ra)] = rb;
    map[static_cast<std::size_t>(rb)] = ra;
  }
  return map;
}

PromptTensor intervene(const PromptTensor& variant, double ratio, std::mt19937_64& rng) {
  if (variant.kind != PromptKind::variant) {
    throw ContractError("intervention applies to variant prompts only");
  }
  expect_shape(variant.values, variant.steps * variant.nodes, variant.dim, "variant prompts");
  const auto swaps = sample_swaps(variant.steps, variant.nodes, ratio, rng);
  const auto map = swap_row_map(variant.steps, variant.nodes, swaps);
  PromptTensor out = variant;
  for (std::size_t r = 0; r < map.size(); ++r) {
    if (map[r] != static_cast<Index>(r)) out.values.row(static_cast<Index>(r)) = variant.values.row(map[r]);
  }
  return out;
}

PromptTensor intervene(const PromptTensor& variant, const InterventionConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  return intervene(variant, config.ratio, rng);
}

}  // namespace mip
