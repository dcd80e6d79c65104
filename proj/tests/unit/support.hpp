#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "mip/autograd.hpp"
#include "mip/data.hpp"

namespace mip::test {

inline Matrix random_matrix(Index rows, Index cols, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

inline Index random_index(std::mt19937_64& rng, Index lo, Index hi) {
  return std::uniform_int_distribution<Index>(lo, hi)(rng);
}

// Builds a scalar on a fresh tape from the current parameter values.
using ScalarFn = std::function<Var(Tape&, ParameterStore&)>;

inline double eval_scalar(const ScalarFn& f, ParameterStore& params) {
  Tape tape(false);
  return f(tape, params).scalar();
}

// Largest norm-relative error ||g_ad - g_fd|| / max(||g_ad||, ||g_fd||, floor)
// over all parameter groups, with central differences of step h.
inline double max_grad_error(const ScalarFn& f, ParameterStore& params, double h = 1e-6,
                             double floor = 1e-8) {
  params.zero_grad();
  {
    Tape tape;
    tape.backward(f(tape, params));
  }
  double worst = 0.0;
  for (auto& [name, p] : params) {
    Matrix numeric(p.value.rows(), p.value.cols());
    for (Index i = 0; i < p.value.size(); ++i) {
      double& x = p.value.data()[i];
      const double keep = x;
      x = keep + h;
      const double up = eval_scalar(f, params);
      x = keep - h;
      const double down = eval_scalar(f, params);
      x = keep;
      numeric.data()[i] = (up - down) / (2.0 * h);
    }
    const double scale = std::max({p.grad.norm(), numeric.norm(), floor});
    worst = std::max(worst, (p.grad - numeric).norm() / scale);
  }
  return worst;
}

// Small synthetic series cut into windows of length `window`.
inline WindowedDataset tiny_windows(Index nodes, Index window, Index steps, std::uint64_t seed = 0,
                                    double shift = 0.0) {
  SyntheticConfig cfg;
  cfg.nodes = nodes;
  cfg.steps = steps;
  cfg.period = 12;
  cfg.shift_magnitude = shift;
  cfg.seed = seed;
  return WindowedDataset::make(generate_synthetic(cfg).series, window);
}

inline Dataset tiny_dataset(Index nodes, Index steps, std::uint64_t seed = 0) {
  SyntheticConfig cfg;
  cfg.nodes = nodes;
  cfg.steps = steps;
  cfg.period = 12;
  cfg.seed = seed;
  return generate_synthetic(cfg);
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("mip_unit_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace mip::test
