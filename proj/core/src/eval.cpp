#include "mip/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <sstream>

#include "json.hpp"
#include "mip/csv.hpp"
#include "mip/plot.hpp"

namespace mip {

using nlohmann::json;

void MetricAccumulator::add(double pred, double target) {
  const double e = pred - target;
  abs_sum_ += std::abs(e);
  sq_sum_ += e * e;
  ++count_;
  if (target != 0.0) {
    pct_sum_ += std::abs(e / target);
    ++mape_count_;
  }
}

void MetricAccumulator::add(const Matrix& pred, const Matrix& target, const Matrix* mask) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw ShapeError("metrics: prediction " + shape_str(pred) + " vs target " + shape_str(target));
  }
  if (mask != nullptr) expect_shape(*mask, pred.rows(), pred.cols(), "metrics mask");
  for (Index i = 0; i < pred.size(); ++i) {
    if (mask != nullptr && mask->data()[i] == 0.0) continue;
    add(pred.data()[i], target.data()[i]);
  }
}

void MetricAccumulator::merge(const MetricAccumulator& other) {
  abs_sum_ += other.abs_sum_;
  sq_sum_ += other.sq_sum_;
  pct_sum_ += other.pct_sum_;
  count_ += other.count_;
  mape_count_ += other.mape_count_;
}

Metrics MetricAccumulator::result() const {
  Metrics m;
  m.count = count_;
  m.mape_count = mape_count_;
  if (count_ > 0) {
    const auto n = static_cast<double>(count_);
    m.mae = abs_sum_ / n;
    m.rmse = std::sqrt(sq_sum_ / n);
  }
  if (mape_count_ > 0) m.mape = 100.0 * pct_sum_ / static_cast<double>(mape_count_);
  return m;
}

Metrics compute_metrics(const Matrix& pred, const Matrix& target, const Matrix* mask) {
  MetricAccumulator acc;
  acc.add(pred, target, mask);
  return acc.result();
}

const MetricBlock& MetricsReport::block(const std::string& name) const {
  for (const MetricBlock& b : blocks) {
    if (b.name == name) return b;
  }
  throw ContractError("metrics report has no block '" + name + "'");
}

namespace {

json metric_json(const Metrics& m) {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  return {{"mae", opt(m.mae)}, {"rmse", opt(m.rmse)}, {"mape", opt(m.mape)},
          {"count", m.count}, {"mape_count", m.mape_count}};
}

std::string cell(const std::optional<double>& v) {
  if (!v) return "undefined";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *v);
  return buf;
}

}  // namespace

std::string MetricsReport::to_json(int indent) const {
  json out = json::object();
  for (const MetricBlock& b : blocks) {
    json per = json::array();
    for (const Metrics& m : b.per_horizon) per.push_back(metric_json(m));
    out[b.name] = {{"final_horizon", metric_json(b.final_horizon)},
                   {"all_horizons", metric_json(b.all_horizons)},
                   {"per_horizon", per}};
  }
  return out.dump(indent);
}

std::string MetricsReport::table(bool all_horizons) const {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-8s %12s %12s %12s %10s\n", all_horizons ? "all" : "final", "MAE",
                "RMSE", "MAPE(%)", "count");
  os << line;
  for (const MetricBlock& b : blocks) {
    const Metrics& m = all_horizons ? b.all_horizons : b.final_horizon;
    std::snprintf(line, sizeof line, "%-8s %12s %12s %12s %10lld\n", b.name.c_str(), cell(m.mae).c_str(),
                  cell(m.rmse).c_str(), cell(m.mape).c_str(), static_cast<long long>(m.count));
    os << line;
  }
  return os.str();
}

MetricsReport evaluate(const WindowedDataset& data, const BatchPredictor& predict, Index batch_size) {
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  const Index steps = data.window();
  std::vector<MetricAccumulator> overall(static_cast<std::size_t>(steps));
  MetricsReport report;

  auto finish = [steps](const std::string& name, const std::vector<MetricAccumulator>& per) {
    MetricBlock b;
    b.name = name;
    MetricAccumulator all;
    for (const MetricAccumulator& a : per) {
      b.per_horizon.push_back(a.result());
      all.merge(a);
    }
    b.final_horizon = per[static_cast<std::size_t>(steps - 1)].result();
    b.all_horizons = all.result();
    return b;
  };

  for (Split split : kTestSplits) {
    std::vector<MetricAccumulator> per(static_cast<std::size_t>(steps));
    const std::vector<Index> idx = data.indices(split);
    for (std::size_t s = 0; s < idx.size(); s += static_cast<std::size_t>(batch_size)) {
      const std::size_t len = std::min(idx.size() - s, static_cast<std::size_t>(batch_size));
      const Batch batch = data.batch(std::span<const Index>(idx).subspan(s, len));
      FlowTensor pred = batch.targets;  // dims and unit flag
      pred.values = predict(batch);
      pred.check();
      const FlowTensor raw = data.normalizer().denormalize(pred);
      const Matrix* mask = batch.mask_ptr();
      for (Index b = 0; b < pred.batch; ++b) {
        for (Index t = 0; t < steps; ++t) {
          const Index r0 = pred.row(b, t, 0);
          const Index n = pred.nodes;
          MetricAccumulator& acc = per[static_cast<std::size_t>(t)];
          if (mask != nullptr) {
            const Matrix m = mask->middleRows(r0, n);
            acc.add(raw.values.middleRows(r0, n), batch.raw_targets.values.middleRows(r0, n), &m);
          } else {
            acc.add(raw.values.middleRows(r0, n), batch.raw_targets.values.middleRows(r0, n));
          }
        }
      }
    }
    for (std::size_t t = 0; t < per.size(); ++t) overall[t].merge(per[t]);
    report.blocks.push_back(finish(split_name(split), per));
  }
  report.blocks.push_back(finish("overall", overall));
  return report;
}

MetricsReport evaluate(const MipModel& model, const WindowedDataset& data, Index batch_size) {
  if (data.nodes() != model.nodes() || data.features() != model.features() ||
      data.window() != model.steps()) {
    throw ConfigError("checkpoint dims (N=" + std::to_string(model.nodes()) + ", k=" +
                      std::to_string(model.features()) + ", T=" + std::to_string(model.steps()) +
                      ") do not match the dataset (N=" + std::to_string(data.nodes()) + ", k=" +
                      std::to_string(data.features()) + ", T=" + std::to_string(data.window()) + ")");
  }
  const FrozenPredictor predictor(model);
  return evaluate(data, [&predictor](const Batch& b) { return predictor.predict(b.inputs.values); },
                  batch_size);
}

std::vector<BenchRow> bench_inference(const ModelConfig& config, const BenchOptions& options) {
  if (options.repetitions < 1 || options.warmup < 0) throw ConfigError("bench: repetitions must be positive");
  std::vector<BenchRow> rows;
  for (Index n : options.nodes) {
    // Keep the expected degree near 8 as N grows, like a road sensor network.
    std::mt19937_64 rng(options.seed + static_cast<std::uint64_t>(n));
    const double radius = std::sqrt(8.0 / (3.141592653589793 * static_cast<double>(n)));
    const GeoGraph graph = random_geometric_graph(n, radius, rng);
    for (Index t : options.horizons) {
      const MipModel model(config, graph, options.features, t);
      const FrozenPredictor predictor(model);
      std::normal_distribution<double> gauss(0.0, 1.0);
      Matrix input(t * n, options.features);
      for (Index i = 0; i < input.size(); ++i) input.data()[i] = gauss(rng);

      double sink = 0.0;
      for (int w = 0; w < options.warmup; ++w) sink += predictor.predict(input)(0, 0);
      std::vector<double> ms;
      ms.reserve(static_cast<std::size_t>(options.repetitions));
      for (int r = 0; r < options.repetitions; ++r) {
        const auto start = std::chrono::steady_clock::now();
        sink += predictor.predict(input)(0, 0);
        ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count());
      }
      if (!std::isfinite(sink)) throw NumericalError("bench: non-finite prediction");
      std::sort(ms.begin(), ms.end());
      auto quantile = [&ms](double q) {
        return ms[static_cast<std::size_t>(std::floor(q * static_cast<double>(ms.size() - 1)))];
      };
      const std::size_t mid = ms.size() / 2;
      const double median = ms.size() % 2 == 1 ? ms[mid] : 0.5 * (ms[mid - 1] + ms[mid]);
      rows.push_back({n, t, median, quantile(0.1), quantile(0.9), options.repetitions});
    }
  }
  return rows;
}

std::string bench_table(const std::vector<BenchRow>& rows) {
  std::ostringstream os;
  char line[128];
  std::snprintf(line, sizeof line, "%8s %6s %12s %12s %12s %6s\n", "N", "T", "median_ms", "p10_ms",
                "p90_ms", "reps");
  os << line;
  for (const BenchRow& r : rows) {
    std::snprintf(line, sizeof line, "%8lld %6lld %12.4f %12.4f %12.4f %6d\n", static_cast<long long>(r.nodes),
                  static_cast<long long>(r.steps), r.median_ms, r.p10_ms, r.p90_ms, r.repetitions);
    os << line;
  }
  return os.str();
}

std::string bench_json(const std::vector<BenchRow>& rows, int indent) {
  json out = json::array();
  for (const BenchRow& r : rows) {
    out.push_back({{"nodes", r.nodes}, {"steps", r.steps}, {"median_ms", r.median_ms},
                   {"p10_ms", r.p10_ms}, {"p90_ms", r.p90_ms}, {"repetitions", r.repetitions}});
  }
  return out.dump(indent);
}

PromptScoreExport export_prompt_scores(const MipModel& model, const WindowedDataset& data, Index node,
                                       Index horizon, Split split, const std::filesystem::path& out_dir,
                                       Index max_windows) {
  if (node < 0 || node >= model.nodes()) {
    throw DomainError("node " + std::to_string(node) + " out of range [0, " + std::to_string(model.nodes()) + ")");
  }
  if (horizon < 0 || horizon >= model.steps()) {
    throw DomainError("horizon " + std::to_string(horizon) + " out of range [0, " +
                      std::to_string(model.steps()) + ")");
  }
  if (data.nodes() != model.nodes() || data.features() != model.features() || data.window() != model.steps()) {
    throw ConfigError("checkpoint dims do not match the dataset");
  }
  std::vector<Index> windows = data.indices(split);
  if (windows.empty()) throw DataError(std::string("split '") + split_name(split) + "' is empty");
  if (max_windows > 0 && static_cast<Index>(windows.size()) > max_windows) {
    windows.resize(static_cast<std::size_t>(max_windows));
  }

  const Index m = model.config().num_prototypes;
  PromptScoreExport out;
  out.windows = windows;
  out.invariant.resize(static_cast<Index>(windows.size()), m);
  out.variant.resize(static_cast<Index>(windows.size()), m);
  Matrix mean_inv = Matrix::Zero(model.nodes(), m);
  Matrix mean_var = Matrix::Zero(model.nodes(), m);
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const FlowTensor inputs = data.window_pair(windows[i]).first;
    const PromptSet p = model.prompts(inputs);
    const Matrix& si = p.invariant_scores[static_cast<std::size_t>(horizon)];
    const Matrix& sv = p.variant_scores[static_cast<std::size_t>(horizon)];
    out.invariant.row(static_cast<Index>(i)) = si.row(node);
    out.variant.row(static_cast<Index>(i)) = sv.row(node);
    mean_inv += si;
    mean_var += sv;
  }
  mean_inv /= static_cast<double>(windows.size());
  mean_var /= static_cast<double>(windows.size());

  std::filesystem::create_directories(out_dir);
  const std::string tag = "node" + std::to_string(node) + "_h" + std::to_string(horizon + 1);
  const std::string htag = "h" + std::to_string(horizon + 1);
  out.files = {out_dir / ("invariant_scores_" + tag + ".csv"), out_dir / ("variant_scores_" + tag + ".csv"),
               out_dir / ("invariant_scores_" + htag + "_nodes.csv"),
               out_dir / ("variant_scores_" + htag + "_nodes.csv"), out_dir / ("prompt_scores_" + tag + ".svg")};
  write_numeric_csv(out.files[0], out.invariant);
  write_numeric_csv(out.files[1], out.variant);
  write_numeric_csv(out.files[2], mean_inv);
  write_numeric_csv(out.files[3], mean_var);

  Matrix both(out.invariant.rows() * 2 + 1, m);
  both.topRows(out.invariant.rows()) = out.invariant;
  both.row(out.invariant.rows()).setConstant(std::numeric_limits<double>::quiet_NaN());
  both.bottomRows(out.variant.rows()) = out.variant;
  plot::heatmap(out.files[4], "prompt scores, node " + std::to_string(node) + ", horizon " +
                                  std::to_string(horizon + 1) + " (top: S_I, bottom: S_V)",
                both, "window", "prototype");
  return out;
}

}  // namespace mip
