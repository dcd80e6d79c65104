#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mip/graph.hpp"
#include "mip/tensor.hpp"

namespace mip {

/// T_total x N x k observations; row (t, n) of `values` is t * nodes + n.
/// Zero entries are treated as missing when `mask_zeros` is set.
struct RawSeries {
  Index steps = 0;
  Index nodes = 0;
  Index features = 0;
  Matrix values;
  int interval_minutes = 5;
  bool mask_zeros = false;
  std::vector<std::string> node_labels;
};

struct Dataset {
  RawSeries series;
  GeoGraph graph;
};

/// Reads meta.json, features.csv and adjacency.csv from a directory.
Dataset load_dataset(const std::filesystem::path& dir);
/// Writes the same three files.
void save_dataset(const std::filesystem::path& dir, const Dataset& data);

/// Per-channel z-score statistics. Channels with zero spread keep mean 0 and
/// scale 1 so that their values pass through unchanged.
struct Normalizer {
  RowVector mean;
  RowVector scale;

  Matrix normalize(const Matrix& raw) const;
  Matrix denormalize(const Matrix& normalized) const;
  /// Contract-checked on the tensor's unit flag.
  FlowTensor normalize(const FlowTensor& raw) const;
  FlowTensor denormalize(const FlowTensor& normalized) const;
};

struct IndexRange {
  Index begin = 0;
  Index end = 0;

  Index size() const { return end - begin; }
  bool empty() const { return end <= begin; }
  bool contains(Index i) const { return i >= begin && i < end; }
};

enum class Split { train, val, test0, test1, test2 };
inline constexpr std::array<Split, 5> kAllSplits = {Split::train, Split::val, Split::test0,
                                                    Split::test1, Split::test2};
inline constexpr std::array<Split, 3> kTestSplits = {Split::test0, Split::test1, Split::test2};
const char* split_name(Split s);

using SplitFractions = std::array<double, 5>;
inline constexpr SplitFractions kDefaultFractions = {0.6, 0.1, 0.1, 0.1, 0.1};

/// Inputs/targets for a set of windows, stacked along the batch axis.
struct Batch {
  FlowTensor inputs;       // normalized
  FlowTensor targets;      // normalized
  FlowTensor raw_targets;  // raw units
  Matrix mask;             // 1 = valid; empty when nothing is masked
  std::vector<Index> windows;

  const Matrix* mask_ptr() const { return mask.size() == 0 ? nullptr : &mask; }
};

/// Stride-1 sliding windows with chronological train/val/test0/test1/test2
/// splits over window start indices. The 2T-1 windows after the training range
/// are dropped so that no training window shares a time step with a later split.
class WindowedDataset {
 public:
  static WindowedDataset make(const RawSeries& raw, Index window,
                              const SplitFractions& fractions = kDefaultFractions);

  Index window() const { return window_; }
  Index num_windows() const { return num_windows_; }
  Index nodes() const { return raw_.nodes; }
  Index features() const { return raw_.features; }
  bool mask_zeros() const { return raw_.mask_zeros; }
  const RawSeries& raw() const { return raw_; }
  const Normalizer& normalizer() const { return normalizer_; }
  const IndexRange& split(Split s) const { return splits_[static_cast<std::size_t>(s)]; }
  /// Windows assigned to no split: the 2T - 1 starts right after training.
  IndexRange purged() const { return purged_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  /// Time steps [w, w + T) and [w + T, w + 2T).
  std::pair<FlowTensor, FlowTensor> window_pair(Index w) const;
  Batch batch(std::span<const Index> windows) const;
  std::vector<Index> indices(Split s) const;

 private:
  RawSeries raw_;
  Matrix normalized_;
  Normalizer normalizer_;
  Index window_ = 0;
  Index num_windows_ = 0;
  std::array<IndexRange, 5> splits_{};
  IndexRange purged_;
  std::vector<std::string> warnings_;
};

enum class ShiftProfile { mean_shift, trend_break, amplitude };
ShiftProfile parse_shift_profile(const std::string& name);
const char* shift_profile_name(ShiftProfile p);

struct SyntheticConfig {
  Index nodes = 8;
  Index steps = 1200;
  Index features = 1;
  ShiftProfile shift_profile = ShiftProfile::mean_shift;
  double shift_magnitude = 0.0;
  double shift_fraction = 0.7;
  Index period = 24;
  double noise_std = 0.1;
  double radius = 0.45;  // connection radius in the unit square
  std::uint64_t seed = 0;
};

/// Random geometric graph plus flows made of node-specific daily periodic
/// components and graph-diffused AR(1) noise. From step
/// floor(shift_fraction * steps) onwards, nodes [0, N/2) receive the shift
/// profile.
Dataset generate_synthetic(const SyntheticConfig& cfg);

/// First step affected by the shift.
Index shift_start(const SyntheticConfig& cfg);

}  // namespace mip
