#include "mip/data.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "json.hpp"
#include "mip/csv.hpp"

namespace mip {

using nlohmann::json;

namespace {

int require_int(const json& meta, const char* key, const std::string& source) {
  if (!meta.contains(key) || !meta.at(key).is_number_integer()) {
    throw DataError(source + ": field '" + key + "' must be an integer");
  }
  return meta.at(key).get<int>();
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& dir) {
  const auto meta_path = dir / "meta.json";
  std::ifstream meta_in(meta_path);
  if (!meta_in) throw DataError("missing file " + meta_path.string());
  json meta;
  try {
    meta = json::parse(meta_in);
  } catch (const json::parse_error& e) {
    throw DataError(meta_path.string() + ": " + e.what());
  }
  if (!meta.is_object()) throw DataError(meta_path.string() + ": expected a JSON object");

  RawSeries series;
  const std::string src = meta_path.string();
  series.nodes = require_int(meta, "num_nodes", src);
  series.features = require_int(meta, "num_features", src);
  series.interval_minutes = require_int(meta, "interval_minutes", src);
  if (series.nodes <= 0 || series.features <= 0 || series.interval_minutes <= 0) {
    throw DataError(src + ": num_nodes, num_features and interval_minutes must be positive");
  }
  if (meta.contains("mask_zeros")) {
    if (!meta.at("mask_zeros").is_boolean()) throw DataError(src + ": 'mask_zeros' must be a boolean");
    series.mask_zeros = meta.at("mask_zeros").get<bool>();
  }
  if (meta.contains("node_labels")) {
    series.node_labels = meta.at("node_labels").get<std::vector<std::string>>();
  }

  const auto features_path = dir / "features.csv";
  if (!std::filesystem::exists(features_path)) throw DataError("missing file " + features_path.string());
  const auto rows = read_numeric_csv(features_path);
  if (rows.empty()) throw DataError(features_path.string() + ": T_total = 0");
  const Index width = series.nodes * series.features;
  series.steps = static_cast<Index>(rows.size());
  series.values.resize(series.steps * series.nodes, series.features);
  for (Index t = 0; t < series.steps; ++t) {
    const auto& row = rows[static_cast<std::size_t>(t)];
    if (static_cast<Index>(row.size()) != width) {
      throw DataError(features_path.string() + ": row " + std::to_string(t + 1) + " has " +
                      std::to_string(row.size()) + " values, expected " + std::to_string(width) +
                      " (num_nodes * num_features)");
    }
    for (Index n = 0; n < series.nodes; ++n) {
      for (Index f = 0; f < series.features; ++f) {
        const double v = row[static_cast<std::size_t>(n * series.features + f)];
        if (!std::isfinite(v)) {
          throw DataError(features_path.string() + ": row " + std::to_string(t + 1) +
                          " has a non-finite value");
        }
        series.values(t * series.nodes + n, f) = v;
      }
    }
  }

  const auto adjacency_path = dir / "adjacency.csv";
  if (!std::filesystem::exists(adjacency_path)) throw DataError("missing file " + adjacency_path.string());
  GeoGraph graph = read_adjacency_csv(adjacency_path);
  if (graph.num_nodes() != series.nodes) {
    throw DataError(adjacency_path.string() + ": " + std::to_string(graph.num_nodes()) +
                    " nodes, meta.json declares " + std::to_string(series.nodes));
  }
  return Dataset{std::move(series), std::move(graph)};
}

void save_dataset(const std::filesystem::path& dir, const Dataset& data) {
  std::filesystem::create_directories(dir);
  const RawSeries& s = data.series;
  json meta = {{"num_nodes", s.nodes},
               {"num_features", s.features},
               {"interval_minutes", s.interval_minutes},
               {"mask_zeros", s.mask_zeros}};
  if (!s.node_labels.empty()) meta["node_labels"] = s.node_labels;
  std::ofstream(dir / "meta.json") << meta.dump(2) << '\n';

  Matrix flat(s.steps, s.nodes * s.features);
  for (Index t = 0; t < s.steps; ++t) {
    for (Index n = 0; n < s.nodes; ++n) {
      for (Index f = 0; f < s.features; ++f) flat(t, n * s.features + f) = s.values(t * s.nodes + n, f);
    }
  }
  write_numeric_csv(dir / "features.csv", flat);
  write_adjacency_csv(dir / "adjacency.csv", data.graph);
}

Matrix Normalizer::normalize(const Matrix& raw) const {
  return (raw.rowwise() - mean).array().rowwise() / scale.array();
}

Matrix Normalizer::denormalize(const Matrix& normalized) const {
  return (normalized.array().rowwise() * scale.array()).matrix().rowwise() + mean;
}

FlowTensor Normalizer::normalize(const FlowTensor& raw) const {
  if (raw.units != Units::raw) throw ContractError("normalize: tensor is already normalized");
  FlowTensor out = raw;
  out.values = normalize(raw.values);
  out.units = Units::normalized;
  return out;
}

FlowTensor Normalizer::denormalize(const FlowTensor& normalized) const {
  if (normalized.units != Units::normalized) {
    throw ContractError("denormalize: tensor is already in raw units");
  }
  FlowTensor out = normalized;
  out.values = denormalize(normalized.values);
  out.units = Units::raw;
  return out;
}

const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test0: return "test0";
    case Split::test1: return "test1";
    case Split::test2: return "test2";
  }
  return "?";
}

WindowedDataset WindowedDataset::make(const RawSeries& raw, Index window,
                                      const SplitFractions& fractions) {
  if (window < 1) throw ConfigError("window length must be positive");
  double total = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0)) throw ConfigError("split fractions must be nonnegative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ConfigError("split fractions sum to " + std::to_string(total) + ", expected 1");
  }
  if (2 * window > raw.steps) {
    throw DataError("series has " + std::to_string(raw.steps) + " steps, need at least 2T = " +
                    std::to_string(2 * window));
  }
  expect_shape(raw.values, raw.steps * raw.nodes, raw.features, "raw series");

  WindowedDataset ds;
  ds.raw_ = raw;
  ds.window_ = window;
  ds.num_windows_ = raw.steps - 2 * window + 1;

  std::array<Index, 6> bounds{};
  double cum = 0.0;
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    cum += fractions[i];
    bounds[i + 1] = std::min<Index>(
        ds.num_windows_, static_cast<Index>(std::floor(cum * static_cast<double>(ds.num_windows_) + 1e-9)));
  }
  bounds[5] = ds.num_windows_;
  for (std::size_t i = 0; i < 5; ++i) ds.splits_[i] = IndexRange{bounds[i], bounds[i + 1]};

  // Windows starting within 2T - 1 steps after training share steps with it.
  const IndexRange& train = ds.splits_[static_cast<std::size_t>(Split::train)];
  if (train.empty()) throw DataError("training split is empty");
  const Index purge_end = std::min(ds.num_windows_, train.end + 2 * window - 1);
  ds.purged_ = IndexRange{train.end, purge_end};
  for (std::size_t i = 1; i < 5; ++i) {
    ds.splits_[i].begin = std::max(ds.splits_[i].begin, purge_end);
    ds.splits_[i].end = std::max(ds.splits_[i].end, ds.splits_[i].begin);
  }

  // Statistics over every step seen as a training input.
  const Index fit_steps = train.end - 1 + window;
  const auto fit_rows = raw.values.topRows(fit_steps * raw.nodes);
  ds.normalizer_.mean = fit_rows.colwise().mean();
  ds.normalizer_.scale.resize(raw.features);
  for (Index f = 0; f < raw.features; ++f) {
    const double mu = ds.normalizer_.mean(f);
    const double var = (fit_rows.col(f).array() - mu).square().mean();
    const double sd = std::sqrt(var);
    if (sd > 0.0) {
      ds.normalizer_.scale(f) = sd;
    } else {
      ds.normalizer_.mean(f) = 0.0;
      ds.normalizer_.scale(f) = 1.0;
      ds.warnings_.push_back("feature " + std::to_string(f) +
                             " has zero variance on the training range; left unscaled");
    }
  }
  ds.normalized_ = ds.normalizer_.normalize(raw.values);
  return ds;
}

std::pair<FlowTensor, FlowTensor> WindowedDataset::window_pair(Index w) const {
  if (w < 0 || w >= num_windows_) throw DomainError("window index " + std::to_string(w) + " out of range");
  const Index n = raw_.nodes;
  FlowTensor in{1, window_, n, raw_.features, normalized_.middleRows(w * n, window_ * n), Units::normalized};
  FlowTensor out{1, window_, n, raw_.features, normalized_.middleRows((w + window_) * n, window_ * n),
                 Units::normalized};
  return {std::move(in), std::move(out)};
}

Batch WindowedDataset::batch(std::span<const Index> windows) const {
  const auto b = static_cast<Index>(windows.size());
  const Index n = raw_.nodes;
  const Index block = window_ * n;
  Batch out;
  out.inputs = FlowTensor::zeros(b, window_, n, raw_.features);
  out.targets = FlowTensor::zeros(b, window_, n, raw_.features);
  out.raw_targets = FlowTensor::zeros(b, window_, n, raw_.features, Units::raw);
  out.windows.assign(windows.begin(), windows.end());
  for (Index i = 0; i < b; ++i) {
    const Index w = windows[static_cast<std::size_t>(i)];
    if (w < 0 || w >= num_windows_) throw DomainError("window index " + std::to_string(w) + " out of range");
    out.inputs.values.middleRows(i * block, block) = normalized_.middleRows(w * n, block);
    out.targets.values.middleRows(i * block, block) = normalized_.middleRows((w + window_) * n, block);
    out.raw_targets.values.middleRows(i * block, block) = raw_.values.middleRows((w + window_) * n, block);
  }
  if (raw_.mask_zeros) {
    out.mask = (out.raw_targets.values.array() != 0.0).cast<double>().matrix();
  }
  return out;
}

std::vector<Index> WindowedDataset::indices(Split s) const {
  const IndexRange& r = split(s);
  std::vector<Index> out;
  out.reserve(static_cast<std::size_t>(std::max<Index>(0, r.size())));
  for (Index i = r.begin; i < r.end; ++i) out.push_back(i);
  return out;
}

ShiftProfile parse_shift_profile(const std::string& name) {
  if (name == "mean_shift") return ShiftProfile::mean_shift;
  if (name == "trend_break") return ShiftProfile::trend_break;
  if (name == "amplitude") return ShiftProfile::amplitude;
  throw ConfigError("unknown shift profile '" + name + "' (mean_shift, trend_break, amplitude)");
}

const char* shift_profile_name(ShiftProfile p) {
  switch (p) {
    case ShiftProfile::mean_shift: return "mean_shift";
    case ShiftProfile::trend_break: return "trend_break";
    case ShiftProfile::amplitude: return "amplitude";
  }
  return "?";
}

Index shift_start(const SyntheticConfig& cfg) {
  return static_cast<Index>(std::floor(cfg.shift_fraction * static_cast<double>(cfg.steps)));
}

Dataset generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.nodes < 4) throw ConfigError("synthetic data needs at least 4 nodes");
  if (cfg.steps < 2 || cfg.features < 1 || cfg.period < 2) {
    throw ConfigError("synthetic data needs steps >= 2, features >= 1, period >= 2");
  }
  if (!(cfg.shift_fraction >= 0.0 && cfg.shift_fraction <= 1.0)) {
    throw ConfigError("shift_fraction must lie in [0, 1]");
  }
  const Index n = cfg.nodes;
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  GeoGraph graph = random_geometric_graph(n, cfg.radius, rng);
  const Matrix diffuse = build_transitions(graph).forward;

  const double two_pi = 2.0 * std::numbers::pi;
  Eigen::VectorXd base(n), amp(n), phase(n), phase2(n);
  for (Index i = 0; i < n; ++i) {
    base(i) = 3.0 + 2.0 * unit(rng);
    amp(i) = 0.5 + unit(rng);
    phase(i) = two_pi * unit(rng);
    phase2(i) = two_pi * unit(rng);
  }

  std::normal_distribution<double> gauss(0.0, 1.0);
  const Index t_shift = shift_start(cfg);
  const double period = static_cast<double>(cfg.period);
  RawSeries series;
  series.steps = cfg.steps;
  series.nodes = n;
  series.features = cfg.features;
  series.interval_minutes = 60;
  series.values.resize(cfg.steps * n, cfg.features);
  Matrix noise = Matrix::Zero(n, cfg.features);
  for (Index t = 0; t < cfg.steps; ++t) {
    Matrix eps(n, cfg.features);
    for (Index i = 0; i < eps.size(); ++i) eps.data()[i] = cfg.noise_std * gauss(rng);
    noise = 0.6 * (diffuse * noise) + eps;
    const bool shifted = t >= t_shift;
    for (Index i = 0; i < n; ++i) {
      const bool in_group = shifted && i < n / 2;
      for (Index f = 0; f < cfg.features; ++f) {
        const double angle = two_pi * static_cast<double>(t) / period;
        double periodic = amp(i) * std::sin(angle + phase(i) + 0.5 * static_cast<double>(f)) +
                          0.5 * amp(i) * std::sin(2.0 * angle + phase2(i));
        double level = base(i);
        if (in_group) {
          switch (cfg.shift_profile) {
            case ShiftProfile::mean_shift:
              level += cfg.shift_magnitude;
              break;
            case ShiftProfile::trend_break:
              level += cfg.shift_magnitude * static_cast<double>(t - t_shift) / period;
              break;
            case ShiftProfile::amplitude:
              periodic *= 1.0 + cfg.shift_magnitude;
              break;
          }
        }
        series.values(t * n + i, f) = level + periodic + noise(i, f);
      }
    }
  }
  return Dataset{std::move(series), std::move(graph)};
}

}  // namespace mip
