#include <benchmark/benchmark.h>

#include <cmath>
#include <random>

#include "mip/autograd.hpp"
#include "mip/model.hpp"
#include "mip/runtime.hpp"
#include "mip/training.hpp"

using namespace mip;

namespace {

GeoGraph bench_graph(Index n) {
  std::mt19937_64 rng(static_cast<std::uint64_t>(n));
  return random_geometric_graph(n, std::sqrt(8.0 / (3.141592653589793 * static_cast<double>(n))), rng);
}

Matrix bench_input(Index rows) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix x(rows, 1);
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = gauss(rng);
  return x;
}

[[maybe_unused]] const bool allocator_ready = (configure_allocator(), true);

}  // namespace

// Frozen single-sample inference, T = 12.
static void BM_Inference(benchmark::State& state) {
  const Index n = state.range(0);
  ModelConfig cfg;
  cfg.variant = static_cast<Variant>(state.range(1));
  const MipModel model(cfg, bench_graph(n), 1, 12);
  const FrozenPredictor predictor(model);
  const Matrix x = bench_input(12 * n);
  for (auto _ : state) benchmark::DoNotOptimize(predictor.predict(x));
  state.SetLabel(variant_name(cfg.variant));
}
BENCHMARK(BM_Inference)
    ->ArgsProduct({{50, 100, 200, 400}, {static_cast<long>(Variant::backbone), static_cast<long>(Variant::full)}})
    ->Unit(benchmark::kMillisecond);

// Forward plus backward of the full objective on one batch of 8 windows.
static void BM_TrainStep(benchmark::State& state) {
  const Index n = state.range(0);
  const Index t = 12, b = 8;
  MipModel model(ModelConfig{}, bench_graph(n), 1, t);
  Batch batch;
  batch.inputs = FlowTensor::zeros(b, t, n, 1);
  batch.inputs.values = bench_input(b * t * n);
  batch.targets = batch.inputs;
  std::mt19937_64 rng(3);
  const auto swaps = batch_swap_map(b, t, n, 0.25, rng);
  for (auto _ : state) {
    model.params().zero_grad();
    Tape tape;
    const Objective o = build_objective(tape, model, batch, LossConfig{}, {&swaps, false});
    tape.backward(o.total);
    benchmark::DoNotOptimize(o.total.scalar());
  }
}
BENCHMARK(BM_TrainStep)->Arg(50)->Arg(100)->Unit(benchmark::kMillisecond);

static void BM_DenseVsSparsePropagation(benchmark::State& state) {
  const Index n = state.range(0);
  const Matrix p = build_transitions(bench_graph(n)).forward;
  const SparseMatrix sp = p.sparseView();
  Matrix x = Matrix::Random(12 * n, 32);
  ParameterStore ps;
  ps.add("x", x);
  const bool sparse = state.range(1) != 0;
  for (auto _ : state) {
    Tape tape(false);
    const Var v = tape.param(ps.at("x"));
    benchmark::DoNotOptimize(sparse ? ag::propagate_blocks(sp, v).value() : ag::propagate_blocks(p, v).value());
  }
  state.SetLabel(sparse ? "sparse" : "dense");
}
BENCHMARK(BM_DenseVsSparsePropagation)->ArgsProduct({{100, 400}, {0, 1}})->Unit(benchmark::kMicrosecond);
BENCHMARK_MAIN();
