#pragma once

#include "mip/config.hpp"
#include "mip/eval.hpp"
#include "mip/training.hpp"

namespace mip {

struct RunResult {
  MipModel model;
  TrainReport report;
  MetricsReport metrics;
};

/// Builds a fresh model from cfg.model, trains it on `data` and evaluates
/// the restored best-validation parameters on the test splits.
RunResult run_experiment(const RunConfig& cfg, const Dataset& dataset, const WindowedDataset& data,
                         const EpochCallback& on_epoch = {});

}  // namespace mip
