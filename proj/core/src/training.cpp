#include "mip/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>

#include "json.hpp"

namespace mip {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("train.learning_rate must be positive");
  }
  if (batch_size < 1) throw ConfigError("train.batch_size must be positive");
  if (max_epochs < 0) throw ConfigError("train.max_epochs must be >= 0");
  if (early_stop_patience < 1) throw ConfigError("train.early_stop_patience must be positive");
  if (!std::isfinite(grad_clip_norm)) throw ConfigError("train.grad_clip_norm must be finite");
}

void Adam::step(ParameterStore& params) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (auto& [name, p] : params) {
    if (p.grad.size() == 0) continue;
    auto [it, fresh] = moments_.try_emplace(name);
    auto& [m, v] = it->second;
    if (fresh) {
      m = Matrix::Zero(p.value.rows(), p.value.cols());
      v = Matrix::Zero(p.value.rows(), p.value.cols());
    }
    m = beta1_ * m + (1.0 - beta1_) * p.grad;
    v = beta2_ * v + (1.0 - beta2_) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
  }
}

double clip_grad_norm(ParameterStore& params, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, p] : params) {
    if (p.grad.size() != 0) sq += p.grad.squaredNorm();
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / (norm + 1e-12);
    for (auto& [name, p] : params) {
      if (p.grad.size() != 0) p.grad *= s;
    }
  }
  return norm;
}

std::vector<Index> batch_swap_map(Index batch, Index steps, Index nodes, double ratio,
                                  std::mt19937_64& rng) {
  const Index block = steps * nodes;
  std::vector<Index> map;
  map.reserve(static_cast<std::size_t>(batch * block));
  for (Index b = 0; b < batch; ++b) {
    const auto swaps = sample_swaps(steps, nodes, ratio, rng);
    for (Index r : swap_row_map(steps, nodes, swaps)) map.push_back(b * block + r);
  }
  return map;
}

Objective build_objective(Tape& tape, MipModel& model, const Batch& batch, const LossConfig& loss,
                          const ObjectiveOptions& options) {
  const VariantFlags f = model.flags();
  ParamBinder bind(tape, model.params());
  ForwardOptions fo;
  fo.with_aux = f.invariant_learning;
  fo.swap_map = options.swap_map;
  fo.detach_aux_inputs = options.detach_aux;
  const ForwardOutputs out = model.forward(bind, batch.inputs.values, fo);

  Objective obj;
  const Matrix& target = batch.targets.values;
  obj.task = task_loss(out.prediction, target, batch.mask_ptr());
  obj.inv = f.invariant_learning ? invariant_loss(out.aux_prediction, target, loss.lambda1, batch.mask_ptr())
                                 : tape.constant(Matrix::Zero(1, 1));
  if (f.regularization && f.prompts) {
    const double rows = static_cast<double>(out.invariant_prompts.rows());
    obj.reg = memory_regularization(out.invariant_prompts, out.bank, out.invariant_scores, loss.margin,
                                    1.0 / rows);
  } else {
    obj.reg = tape.constant(Matrix::Zero(1, 1));
  }
  obj.total = ag::add(ag::add(obj.task, obj.inv), ag::scale(obj.reg, loss.lambda2));
  return obj;
}

double split_mae(const MipModel& model, const WindowedDataset& data, Split split, Index batch_size) {
  const std::vector<Index> idx = data.indices(split);
  if (idx.empty()) throw DataError(std::string("split '") + split_name(split) + "' is empty");
  const FrozenPredictor predictor(model);
  double sum = 0.0;
  double count = 0.0;
  for (std::size_t start = 0; start < idx.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t len = std::min(idx.size() - start, static_cast<std::size_t>(batch_size));
    const Batch b = data.batch(std::span<const Index>(idx).subspan(start, len));
    const Matrix pred = predictor.predict(b.inputs.values);
    const Matrix err = (pred - b.targets.values).cwiseAbs();
    if (const Matrix* m = b.mask_ptr()) {
      sum += err.cwiseProduct(*m).sum();
      count += m->sum();
    } else {
      sum += err.sum();
      count += static_cast<double>(err.size());
    }
  }
  if (count == 0.0) throw DataError(std::string("split '") + split_name(split) + "' has no valid targets");
  return sum / count;
}

namespace {

void check_finite(const Objective& obj, int epoch) {
  const std::pair<const char*, Var> terms[] = {
      {"loss_task", obj.task}, {"loss_inv", obj.inv}, {"loss_reg", obj.reg}, {"loss_total", obj.total}};
  for (const auto& [name, v] : terms) {
    if (!std::isfinite(v.scalar())) {
      throw NumericalError(std::string(name) + " became non-finite in epoch " + std::to_string(epoch));
    }
  }
}

std::map<std::string, Matrix> snapshot(const ParameterStore& params) {
  std::map<std::string, Matrix> out;
  for (const auto& [name, p] : params) out.emplace(name, p.value);
  return out;
}

}  // namespace

TrainReport train(MipModel& model, const WindowedDataset& data, const TrainConfig& train_cfg,
                  const LossConfig& loss_cfg, const InterventionConfig& intervention_cfg,
                  const EpochCallback& on_epoch) {
  train_cfg.validate();
  loss_cfg.validate();
  intervention_cfg.validate();
  if (data.split(Split::train).empty()) throw DataError("training split is empty");
  if (data.split(Split::val).empty()) throw DataError("validation split is empty");
  if (data.nodes() != model.nodes() || data.features() != model.features() ||
      data.window() != model.steps()) {
    throw ConfigError("dataset dims (N, k, T) do not match the model");
  }

  TrainReport report;
  if (train_cfg.max_epochs == 0) return report;

  std::mt19937_64 shuffle_rng(train_cfg.seed);
  std::mt19937_64 swap_rng(intervention_cfg.seed);
  Adam optimizer(train_cfg.learning_rate);
  const bool intervening = model.flags().invariant_learning;

  std::vector<Index> order = data.indices(Split::train);
  std::map<std::string, Matrix> best;
  int since_best = 0;

  for (int epoch = 0; epoch < train_cfg.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochRecord rec;
    rec.epoch = epoch;
    double seen = 0.0;
    for (std::size_t s = 0; s < order.size(); s += static_cast<std::size_t>(train_cfg.batch_size)) {
      const std::size_t len = std::min(order.size() - s, static_cast<std::size_t>(train_cfg.batch_size));
      const Batch batch = data.batch(std::span<const Index>(order).subspan(s, len));
      if (const Matrix* m = batch.mask_ptr(); m != nullptr && m->sum() == 0.0) continue;

      std::vector<Index> swaps;
      ObjectiveOptions opts;
      opts.detach_aux = train_cfg.detach_aux;
      if (intervening) {
        swaps = batch_swap_map(batch.inputs.batch, model.steps(), model.nodes(), intervention_cfg.ratio,
                               swap_rng);
        opts.swap_map = &swaps;
      }

      model.params().zero_grad();
      Tape tape;
      const Objective obj = build_objective(tape, model, batch, loss_cfg, opts);
      check_finite(obj, epoch);
      tape.backward(obj.total);
      if (train_cfg.grad_clip_norm > 0.0) {
        const double norm = clip_grad_norm(model.params(), train_cfg.grad_clip_norm);
        if (!std::isfinite(norm)) {
          throw NumericalError("gradient norm became non-finite in epoch " + std::to_string(epoch));
        }
      }
      optimizer.step(model.params());

      const auto w = static_cast<double>(len);
      rec.loss_total += w * obj.total.scalar();
      rec.loss_task += w * obj.task.scalar();
      rec.loss_inv += w * obj.inv.scalar();
      rec.loss_reg += w * loss_cfg.lambda2 * obj.reg.scalar();
      seen += w;
    }
    if (seen > 0.0) {
      rec.loss_total /= seen;
      rec.loss_task /= seen;
      rec.loss_inv /= seen;
      rec.loss_reg /= seen;
    }
    rec.val_mae = split_mae(model, data, Split::val, train_cfg.batch_size);
    if (!std::isfinite(rec.val_mae)) {
      throw NumericalError("val_mae became non-finite in epoch " + std::to_string(epoch));
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (report.best_epoch < 0 || rec.val_mae < report.best_val_mae) {
      report.best_epoch = epoch;
      report.best_val_mae = rec.val_mae;
      best = snapshot(model.params());
      since_best = 0;
    } else if (++since_best >= train_cfg.early_stop_patience) {
      report.early_stopped = true;
      break;
    }
  }
  for (auto& [name, value] : best) model.params().at(name).value = value;
  return report;
}

void write_report_jsonl(const std::filesystem::path& path, const TrainReport& report) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const EpochRecord& r : report.epochs) {
    const nlohmann::json j = {{"epoch", r.epoch},       {"loss_total", r.loss_total},
                              {"loss_task", r.loss_task}, {"loss_inv", r.loss_inv},
                              {"loss_reg", r.loss_reg},   {"val_mae", r.val_mae},
                              {"seconds", r.seconds}};
    out << j.dump() << '\n';
  }
}

std::vector<EpochRecord> read_report_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<EpochRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      EpochRecord r;
      r.epoch = j.at("epoch").get<int>();
      r.loss_total = j.at("loss_total").get<double>();
      r.loss_task = j.at("loss_task").get<double>();
      r.loss_inv = j.at("loss_inv").get<double>();
      r.loss_reg = j.at("loss_reg").get<double>();
      r.val_mae = j.at("val_mae").get<double>();
      r.seconds = j.at("seconds").get<double>();
      out.push_back(r);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace mip
