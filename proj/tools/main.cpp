// mip: train, evaluate and inspect memory-prompt flow forecasters.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mip/checkpoint.hpp"
#include "mip/config.hpp"
#include "mip/csv.hpp"
#include "mip/eval.hpp"
#include "mip/experiment.hpp"
#include "mip/plot.hpp"
#include "mip/runtime.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kConfig = 2, kData = 3, kNumerical = 4 };

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw mip::DataError("cannot write " + path.string());
  out << text;
  if (!text.empty() && text.back() != '\n') out << '\n';
}

mip::RunConfig load_config(const std::string& path, const std::vector<std::string>& sets) {
  mip::RunConfig cfg = path.empty() ? mip::RunConfig{} : mip::load_run_config(path);
  mip::apply_overrides(cfg, sets);
  cfg.validate();
  return cfg;
}

// Dataset for a checkpoint: the recorded run config, or an explicit directory.
struct LoadedData {
  mip::Dataset dataset;
  mip::WindowedDataset windows;
};

LoadedData data_for(const mip::Checkpoint& ck, const std::string& data_dir) {
  mip::DataConfig dc;
  const json recorded = json::parse(ck.run_config);
  if (recorded.contains("data")) dc = mip::parse_run_config(json{{"data", recorded["data"]}}.dump()).data;
  if (!data_dir.empty()) {
    dc.source = "directory";
    dc.path = data_dir;
    dc.grid_rows = dc.grid_cols = 0;
  } else if (!recorded.contains("data")) {
    throw mip::ConfigError("checkpoint has no recorded dataset; pass --data");
  }
  dc.window = ck.steps;
  mip::Dataset ds = mip::materialize_dataset(dc);
  mip::WindowedDataset wd = mip::make_windows(ds, dc);
  return {std::move(ds), std::move(wd)};
}

mip::Split parse_split(const std::string& name) {
  for (mip::Split s : mip::kAllSplits) {
    if (name == mip::split_name(s)) return s;
  }
  throw mip::ConfigError("unknown split '" + name + "'");
}

void print_epoch(const mip::EpochRecord& r) {
  std::fprintf(stderr, "epoch %4d  total %.5f  task %.5f  inv %.5f  reg %.5f  val_mae %.5f  (%.2fs)\n", r.epoch,
               r.loss_total, r.loss_task, r.loss_inv, r.loss_reg, r.val_mae, r.seconds);
}

void loss_plot(const fs::path& path, const mip::TrainReport& report) {
  mip::plot::Series total{"total", {}}, task{"task", {}}, inv{"inv", {}}, reg{"reg", {}}, val{"val_mae", {}};
  for (const auto& r : report.epochs) {
    total.values.push_back(r.loss_total);
    task.values.push_back(r.loss_task);
    inv.values.push_back(r.loss_inv);
    reg.values.push_back(r.loss_reg);
    val.values.push_back(r.val_mae);
  }
  mip::plot::line_chart(path, "training losses", {total, task, inv, reg, val}, "epoch", "loss");
}

// ---- subcommands ----

struct SynthArgs {
  std::string out;
  mip::SyntheticConfig cfg;
  std::string profile = "mean_shift";
};

int run_synth(const SynthArgs& a) {
  mip::SyntheticConfig cfg = a.cfg;
  cfg.shift_profile = mip::parse_shift_profile(a.profile);
  const mip::Dataset ds = mip::generate_synthetic(cfg);
  mip::save_dataset(a.out, ds);
  std::printf("wrote %s: T_total=%lld N=%lld k=%lld, shift from step %lld\n", a.out.c_str(),
              static_cast<long long>(ds.series.steps), static_cast<long long>(ds.series.nodes),
              static_cast<long long>(ds.series.features), static_cast<long long>(mip::shift_start(cfg)));
  return kOk;
}

struct TrainArgs {
  std::string config;
  std::vector<std::string> sets;
  std::string out = "run";
  bool quiet = false;
  bool all_horizons = false;
};

int run_train(const TrainArgs& a) {
  const mip::RunConfig cfg = load_config(a.config, a.sets);
  const mip::Dataset ds = mip::materialize_dataset(cfg.data);
  const mip::WindowedDataset wd = mip::make_windows(ds, cfg.data);
  for (const std::string& w : wd.warnings()) std::fprintf(stderr, "warning: %s\n", w.c_str());
  fs::create_directories(a.out);
  const fs::path out(a.out);
  mip::save_run_config(out / "config.json", cfg);

  const mip::RunResult r =
      mip::run_experiment(cfg, ds, wd, a.quiet ? mip::EpochCallback{} : mip::EpochCallback(print_epoch));
  mip::save_checkpoint(out / "checkpoint.bin", r.model, wd.normalizer(), mip::run_config_json(cfg));
  mip::write_report_jsonl(out / "report.jsonl", r.report);
  if (!r.report.epochs.empty()) loss_plot(out / "loss_curve.svg", r.report);
  write_text(out / "metrics.json", r.metrics.to_json());

  std::printf("best epoch %d, val MAE %.5f%s\n", r.report.best_epoch, r.report.best_val_mae,
              r.report.early_stopped ? " (early stop)" : "");
  std::printf("%s", r.metrics.table(a.all_horizons).c_str());
  std::printf("artifacts in %s\n", a.out.c_str());
  return kOk;
}

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  bool all_horizons = false;
  bool json_only = false;
  std::string out;
};

int run_evaluate(const EvalArgs& a) {
  const mip::Checkpoint ck = mip::load_checkpoint(a.checkpoint);
  const mip::MipModel model = ck.restore();
  const LoadedData d = data_for(ck, a.data);
  const mip::MetricsReport report = mip::evaluate(model, d.windows);
  const std::string js = report.to_json();
  if (!a.out.empty()) write_text(a.out, js);
  if (a.json_only) {
    std::printf("%s\n", js.c_str());
  } else {
    std::printf("%s", report.table(a.all_horizons).c_str());
    if (a.out.empty()) std::printf("%s\n", js.c_str());
  }
  if (!a.out.empty()) {
    const fs::path svg = fs::path(a.out).replace_extension(".svg");
    std::vector<std::string> cats;
    mip::plot::Series mae{"MAE", {}}, rmse{"RMSE", {}};
    for (const auto& b : report.blocks) {
      const auto& m = a.all_horizons ? b.all_horizons : b.final_horizon;
      cats.push_back(b.name);
      mae.values.push_back(m.mae.value_or(std::nan("")));
      rmse.values.push_back(m.rmse.value_or(std::nan("")));
    }
    mip::plot::grouped_bars(svg, "test metrics", cats, {mae, rmse}, "raw units");
  }
  return kOk;
}

struct PredictArgs {
  std::string checkpoint;
  std::string data;
  long long window = -1;
  std::string split = "test0";
  std::string out = "prediction.csv";
};

int run_predict(const PredictArgs& a) {
  const mip::Checkpoint ck = mip::load_checkpoint(a.checkpoint);
  const mip::MipModel model = ck.restore();
  const LoadedData d = data_for(ck, a.data);
  mip::Index w = a.window;
  if (w < 0) {
    const auto idx = d.windows.indices(parse_split(a.split));
    if (idx.empty()) throw mip::DataError("split '" + a.split + "' is empty");
    w = idx.front();
  }
  if (w >= d.windows.num_windows()) {
    throw mip::ConfigError("window " + std::to_string(w) + " out of range [0, " +
                           std::to_string(d.windows.num_windows()) + ")");
  }
  const std::vector<mip::Index> one = {w};
  const mip::Batch b = d.windows.batch(one);
  mip::FlowTensor pred = b.targets;
  pred.values = mip::FrozenPredictor(model).predict(b.inputs.values);
  const mip::FlowTensor raw = d.windows.normalizer().denormalize(pred);
  // Same layout as features.csv: one line per step, node-major.
  mip::Matrix lines(raw.steps, raw.nodes * raw.features);
  for (mip::Index t = 0; t < raw.steps; ++t) {
    for (mip::Index n = 0; n < raw.nodes; ++n) {
      for (mip::Index f = 0; f < raw.features; ++f) lines(t, n * raw.features + f) = raw.at(0, t, n, f);
    }
  }
  mip::write_numeric_csv(a.out, lines);
  const mip::Metrics m = mip::compute_metrics(raw.values, b.raw_targets.values, b.mask_ptr());
  std::printf("window %lld -> %s (MAE %.4f against the observed targets)\n", static_cast<long long>(w),
              a.out.c_str(), m.mae.value_or(std::nan("")));
  return kOk;
}

struct BenchArgs {
  std::string checkpoint;
  std::string config;
  std::vector<std::string> sets;
  std::vector<long long> nodes = {50, 100, 200, 400};
  std::vector<long long> horizons = {12};
  int reps = 100;
  int warmup = 5;
  bool json_only = false;
  std::string out;
};

int run_bench(const BenchArgs& a) {
  mip::ModelConfig model;
  mip::Index features = 1;
  if (!a.checkpoint.empty()) {
    const mip::Checkpoint ck = mip::load_checkpoint(a.checkpoint);
    model = ck.model;
    features = ck.features;
  } else {
    model = load_config(a.config, a.sets).model;
  }
  mip::BenchOptions opts;
  opts.nodes.assign(a.nodes.begin(), a.nodes.end());
  opts.horizons.assign(a.horizons.begin(), a.horizons.end());
  opts.repetitions = a.reps;
  opts.warmup = a.warmup;
  opts.features = features;
  const auto rows = mip::bench_inference(model, opts);
  const std::string js = mip::bench_json(rows);
  if (!a.out.empty()) write_text(a.out, js);
  if (a.json_only) {
    std::printf("%s\n", js.c_str());
  } else {
    std::printf("%s", mip::bench_table(rows).c_str());
  }
  return kOk;
}

struct ExportArgs {
  std::string checkpoint;
  std::string data;
  long long node = 0;
  long long horizon = 0;  // 1-based on the command line
  std::string split = "test0";
  long long max_windows = 0;
  std::string out = "prompt_scores";
};

int run_export(const ExportArgs& a) {
  const mip::Checkpoint ck = mip::load_checkpoint(a.checkpoint);
  const mip::MipModel model = ck.restore();
  const LoadedData d = data_for(ck, a.data);
  const mip::Index horizon = a.horizon == 0 ? model.steps() - 1 : a.horizon - 1;
  const auto res = mip::export_prompt_scores(model, d.windows, a.node, horizon, parse_split(a.split), a.out,
                                             a.max_windows);
  for (const auto& f : res.files) std::printf("wrote %s\n", f.string().c_str());
  return kOk;
}

struct AblateArgs {
  std::string config;
  std::vector<std::string> sets;
  std::vector<long long> seeds = {0};
  std::vector<std::string> variants;
  std::string out = "ablation";
  bool quiet = false;
  bool all_horizons = false;
};

int run_ablate(const AblateArgs& a) {
  const mip::RunConfig base = load_config(a.config, a.sets);
  const mip::Dataset ds = mip::materialize_dataset(base.data);
  const mip::WindowedDataset wd = mip::make_windows(ds, base.data);
  std::vector<mip::Variant> variants;
  if (a.variants.empty()) {
    variants.assign(std::begin(mip::kAllVariants), std::end(mip::kAllVariants));
  } else {
    for (const auto& v : a.variants) variants.push_back(mip::parse_variant(v));
  }
  fs::create_directories(a.out);

  json results = json::array();
  std::vector<std::string> blocks = {"test0", "test1", "test2", "overall"};
  std::vector<mip::plot::Series> bars;
  std::printf("%-24s %6s %10s %10s %10s %10s\n", "variant", "seed", "test0", "test1", "test2", "overall");
  for (mip::Variant v : variants) {
    mip::plot::Series series{mip::variant_name(v), std::vector<double>(blocks.size(), 0.0)};
    for (long long seed : a.seeds) {
      mip::RunConfig cfg = base;
      cfg.model.variant = v;
      cfg.model.seed = cfg.train.seed = cfg.intervention.seed = static_cast<std::uint64_t>(seed);
      const mip::RunResult r = mip::run_experiment(cfg, ds, wd, a.quiet ? mip::EpochCallback{} : print_epoch);
      json entry = {{"variant", mip::variant_name(v)}, {"seed", seed},
                    {"best_epoch", r.report.best_epoch}, {"metrics", json::parse(r.metrics.to_json())}};
      results.push_back(entry);
      std::printf("%-24s %6lld", mip::variant_name(v), seed);
      for (std::size_t i = 0; i < blocks.size(); ++i) {
        const auto& blk = r.metrics.block(blocks[i]);
        const double rmse = (a.all_horizons ? blk.all_horizons : blk.final_horizon).rmse.value_or(std::nan(""));
        series.values[i] += rmse / static_cast<double>(a.seeds.size());
        std::printf(" %10.4f", rmse);
      }
      std::printf("\n");
      std::fflush(stdout);
    }
    bars.push_back(series);
  }
  write_text(fs::path(a.out) / "ablation.json", results.dump(2));
  mip::plot::grouped_bars(fs::path(a.out) / "ablation_rmse.svg", "RMSE by variant (mean over seeds)", blocks,
                          bars, "RMSE");
  std::printf("rows are RMSE (%s horizon); details in %s\n", a.all_horizons ? "all" : "final",
              (fs::path(a.out) / "ablation.json").c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  mip::configure_allocator();
  CLI::App app{"Memory-prompt invariant learning for urban flow forecasting"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic dataset directory");
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--nodes", synth.cfg.nodes, "Number of nodes");
  s->add_option("--steps", synth.cfg.steps, "Number of time steps");
  s->add_option("--features", synth.cfg.features, "Features per node");
  s->add_option("--profile", synth.profile, "mean_shift | trend_break | amplitude");
  s->add_option("--magnitude", synth.cfg.shift_magnitude, "Shift magnitude");
  s->add_option("--fraction", synth.cfg.shift_fraction, "Fraction of steps before the shift");
  s->add_option("--period", synth.cfg.period, "Period in steps");
  s->add_option("--noise", synth.cfg.noise_std, "Noise standard deviation");
  s->add_option("--seed", synth.cfg.seed, "Random seed");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a model and write checkpoint, report and plots");
  t->add_option("--config", tr.config, "JSON config file")->check(CLI::ExistingFile);
  t->add_option("--set", tr.sets, "Override, e.g. --set train.max_epochs=5");
  t->add_option("--out", tr.out, "Output directory");
  t->add_flag("--quiet", tr.quiet, "No per-epoch log");
  t->add_flag("--all-horizons", tr.all_horizons, "Report all-horizon means");

  EvalArgs ev;
  auto* e = app.add_subcommand("evaluate", "Score a checkpoint on test0/test1/test2");
  e->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  e->add_option("--data", ev.data, "Dataset directory (default: the one recorded at training)");
  e->add_flag("--all-horizons", ev.all_horizons, "Report all-horizon means");
  e->add_flag("--json", ev.json_only, "Print only JSON");
  e->add_option("--out", ev.out, "Write JSON here (and a bar chart next to it)");

  PredictArgs pr;
  auto* p = app.add_subcommand("predict", "Forecast one window in raw units");
  p->add_option("--checkpoint", pr.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  p->add_option("--data", pr.data, "Dataset directory");
  p->add_option("--window", pr.window, "Window start index (default: first window of --split)");
  p->add_option("--split", pr.split, "Split used when --window is absent");
  p->add_option("--out", pr.out, "CSV output");

  BenchArgs be;
  auto* b = app.add_subcommand("bench", "Inference latency over node counts and horizons");
  b->add_option("--checkpoint", be.checkpoint, "Take the architecture from a checkpoint");
  b->add_option("--config", be.config, "Or from a config file");
  b->add_option("--set", be.sets, "Config override");
  b->add_option("--nodes", be.nodes, "Node counts")->delimiter(',');
  b->add_option("--horizons", be.horizons, "Horizons T")->delimiter(',');
  b->add_option("--reps", be.reps, "Timed repetitions per cell");
  b->add_option("--warmup", be.warmup, "Untimed warm-up runs per cell");
  b->add_flag("--json", be.json_only, "Print only JSON");
  b->add_option("--out", be.out, "Write JSON here");

  ExportArgs ex;
  auto* x = app.add_subcommand("export-prompts", "Write S_I / S_V prompt scores and a heatmap");
  x->add_option("--checkpoint", ex.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  x->add_option("--data", ex.data, "Dataset directory");
  x->add_option("--node", ex.node, "Node index (0-based)");
  x->add_option("--horizon", ex.horizon, "Horizon (1-based; default: last)");
  x->add_option("--split", ex.split, "Windows to export");
  x->add_option("--max-windows", ex.max_windows, "Limit the number of windows (0 = all)");
  x->add_option("--out", ex.out, "Output directory");

  AblateArgs ab;
  auto* a = app.add_subcommand("ablate", "Train and score every ablation variant");
  a->add_option("--config", ab.config, "JSON config file")->check(CLI::ExistingFile);
  a->add_option("--set", ab.sets, "Config override");
  a->add_option("--seeds", ab.seeds, "Seeds")->delimiter(',');
  a->add_option("--variants", ab.variants, "Subset of variants")->delimiter(',');
  a->add_option("--out", ab.out, "Output directory");
  a->add_flag("--quiet", ab.quiet, "No per-epoch log");
  a->add_flag("--all-horizons", ab.all_horizons, "Rank by all-horizon RMSE");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*s) return run_synth(synth);
    if (*t) return run_train(tr);
    if (*e) return run_evaluate(ev);
    if (*p) return run_predict(pr);
    if (*b) {
      if (!be.checkpoint.empty() && !be.config.empty()) {
        throw mip::ConfigError("bench takes --checkpoint or --config, not both");
      }
      return run_bench(be);
    }
    if (*x) return run_export(ex);
    if (*a) return run_ablate(ab);
  } catch (const mip::ConfigError& err) {
    std::fprintf(stderr, "config error: %s\n", err.what());
    return kConfig;
  } catch (const mip::DataError& err) {
    std::fprintf(stderr, "data error: %s\n", err.what());
    return kData;
  } catch (const mip::NumericalError& err) {
    std::fprintf(stderr, "numerical failure: %s\n", err.what());
    return kNumerical;
  } catch (const mip::Error& err) {
    // Shape, domain and contract violations come from user-supplied indices or files.
    std::fprintf(stderr, "invalid input: %s\n", err.what());
    return kConfig;
  } catch (const nlohmann::json::exception& err) {
    std::fprintf(stderr, "config error: %s\n", err.what());
    return kConfig;
  }
  return kOk;
}
