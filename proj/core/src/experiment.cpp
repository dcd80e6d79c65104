#include "mip/experiment.hpp"

namespace mip {

RunResult run_experiment(const RunConfig& cfg, const Dataset& dataset, const WindowedDataset& data,
                         const EpochCallback& on_epoch) {
  cfg.validate();
  MipModel model(cfg.model, dataset.graph, data.features(), data.window());
  TrainReport report = train(model, data, cfg.train, cfg.loss, cfg.intervention, on_epoch);
  MetricsReport metrics = evaluate(model, data, cfg.train.batch_size);
  return RunResult{std::move(model), std::move(report), std::move(metrics)};
}

}  // namespace mip
