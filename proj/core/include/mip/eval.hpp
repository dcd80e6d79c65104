#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mip/data.hpp"
#include "mip/model.hpp"

namespace mip {

/// MAE, RMSE and MAPE (percent). A metric with no valid entries is nullopt.
struct Metrics {
  std::optional<double> mae;
  std::optional<double> rmse;
  std::optional<double> mape;
  Index count = 0;       // entries in MAE/RMSE
  Index mape_count = 0;  // entries with y != 0
};

/// Running sums; merging two accumulators equals accumulating the union.
class MetricAccumulator {
 public:
  /// Entries with mask == 0 are skipped; MAPE also skips y == 0.
  void add(const Matrix& pred, const Matrix& target, const Matrix* mask = nullptr);
  void add(double pred, double target);
  void merge(const MetricAccumulator& other);
  Metrics result() const;

 private:
  double abs_sum_ = 0.0;
  double sq_sum_ = 0.0;
  double pct_sum_ = 0.0;
  Index count_ = 0;
  Index mape_count_ = 0;
};

Metrics compute_metrics(const Matrix& pred, const Matrix& target, const Matrix* mask = nullptr);

/// Final-horizon, all-horizon and per-horizon metrics of one test block.
struct MetricBlock {
  std::string name;
  Metrics final_horizon;
  Metrics all_horizons;
  std::vector<Metrics> per_horizon;  // length T
};

/// test0, test1, test2, overall. The overall block accumulates every
/// element of the three test sets (element-weighted).
struct MetricsReport {
  std::vector<MetricBlock> blocks;

  const MetricBlock& block(const std::string& name) const;
  std::string to_json(int indent = 2) const;
  std::string table(bool all_horizons = false) const;
};

/// Normalized (B*T*N) x k predictions for a batch.
using BatchPredictor = std::function<Matrix(const Batch&)>;

/// Runs `predict` over test0/test1/test2, denormalizes once and scores
/// against the raw targets (masked when the dataset masks zeros).
MetricsReport evaluate(const WindowedDataset& data, const BatchPredictor& predict,
                       Index batch_size = 64);
MetricsReport evaluate(const MipModel& model, const WindowedDataset& data, Index batch_size = 64);

struct BenchRow {
  Index nodes = 0;
  Index steps = 0;
  double median_ms = 0.0;
  double p10_ms = 0.0;
  double p90_ms = 0.0;
  int repetitions = 0;
};

struct BenchOptions {
  std::vector<Index> nodes = {50, 100, 200, 400};
  std::vector<Index> horizons = {12};
  int repetitions = 100;
  int warmup = 5;
  Index features = 1;
  std::uint64_t seed = 0;
};

/// Per-sample inference latency of a freshly initialized model with the
/// given architecture, for every (N, T) pair, on random geometric graphs and
/// random inputs. One row per pair, in input order.
std::vector<BenchRow> bench_inference(const ModelConfig& model, const BenchOptions& options);
std::string bench_table(const std::vector<BenchRow>& rows);
std::string bench_json(const std::vector<BenchRow>& rows, int indent = 2);

struct PromptScoreExport {
  Matrix invariant;  // one row per window, M columns
  Matrix variant;
  std::vector<Index> windows;
  std::vector<std::filesystem::path> files;
};

/// Writes S_I and S_V rows of (node, horizon) for every window of `split`,
/// N x M window-averaged score matrices for that horizon, and an SVG
/// heatmap. horizon is 0-based.
PromptScoreExport export_prompt_scores(const MipModel& model, const WindowedDataset& data,
                                       Index node, Index horizon, Split split,
                                       const std::filesystem::path& out_dir,
                                       Index max_windows = 0);

}  // namespace mip
