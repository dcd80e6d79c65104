#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <vector>

#include "mip/data.hpp"
#include "mip/intervention.hpp"
#include "mip/losses.hpp"
#include "mip/model.hpp"

namespace mip {

struct TrainConfig {
  double learning_rate = 0.001;
  Index batch_size = 64;
  int max_epochs = 100;
  int early_stop_patience = 15;
  double grad_clip_norm = 5.0;  // <= 0 disables clipping
  std::uint64_t seed = 0;
  /// Stops L_inv gradients at the prompt extractor; only the auxiliary
  /// predictor learns from it.
  bool detach_aux = false;

  void validate() const;
};

/// Adam with bias correction. State is keyed by parameter name.
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParameterStore& params);
  long steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::map<std::string, std::pair<Matrix, Matrix>> moments_;
};

/// Scales every gradient so that the global L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_grad_norm(ParameterStore& params, double max_norm);

struct ObjectiveOptions {
  /// Row map for the intervened variant prompts (see batch_swap_map).
  const std::vector<Index>* swap_map = nullptr;
  bool detach_aux = false;
};

/// Loss terms on a tape. Terms a variant does not use are constant zeros.
/// total = task + inv + lambda2 * reg, where reg is the mean over slots.
struct Objective {
  Var total;
  Var task;
  Var inv;
  Var reg;
};

Objective build_objective(Tape& tape, MipModel& model, const Batch& batch, const LossConfig& loss,
                          const ObjectiveOptions& options = {});

/// Independent Algorithm-1 draws for each sample of a batch, combined into
/// one row map over (B*T*N) rows.
std::vector<Index> batch_swap_map(Index batch, Index steps, Index nodes, double ratio,
                                  std::mt19937_64& rng);

struct EpochRecord {
  int epoch = 0;
  double loss_total = 0.0;
  double loss_task = 0.0;
  double loss_inv = 0.0;
  double loss_reg = 0.0;  // already multiplied by lambda2
  double val_mae = 0.0;
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;
  double best_val_mae = 0.0;
  bool early_stopped = false;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch training with a fresh intervention per batch and epoch.
/// Restores the parameters of the best validation epoch before returning.
TrainReport train(MipModel& model, const WindowedDataset& data, const TrainConfig& train_cfg,
                  const LossConfig& loss_cfg, const InterventionConfig& intervention_cfg,
                  const EpochCallback& on_epoch = {});

/// Masked MAE of the frozen model over a split, normalized units.
double split_mae(const MipModel& model, const WindowedDataset& data, Split split,
                 Index batch_size = 64);

/// One JSON object per line: epoch, loss_total, loss_task, loss_inv,
/// loss_reg, val_mae, seconds.
void write_report_jsonl(const std::filesystem::path& path, const TrainReport& report);
std::vector<EpochRecord> read_report_jsonl(const std::filesystem::path& path);

}  // namespace mip
