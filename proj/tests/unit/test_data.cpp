#include <fstream>

#include "doctest.h"
#include "mip/data.hpp"
#include "support.hpp"

using namespace mip;

namespace {

RawSeries ramp(Index steps, Index nodes, Index features) {
  RawSeries s;
  s.steps = steps;
  s.nodes = nodes;
  s.features = features;
  s.values.resize(steps * nodes, features);
  for (Index i = 0; i < s.values.size(); ++i) s.values.data()[i] = static_cast<double>(i % 97) + 0.5;
  return s;
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

std::filesystem::path small_dir(const std::string& name, const std::string& features) {
  const auto dir = test::scratch_dir(name);
  write_text(dir / "meta.json", R"({"num_nodes": 3, "num_features": 1, "interval_minutes": 5})");
  write_text(dir / "features.csv", features);
  write_text(dir / "adjacency.csv", "0,1,0\n1,0,1\n0,1,0\n");
  return dir;
}

}  // namespace

TEST_CASE("window count and layout") {
  const WindowedDataset d = WindowedDataset::make(ramp(48, 2, 1), 12);
  CHECK(d.num_windows() == 25);
  const auto [in, out] = d.window_pair(3);
  CHECK(in.steps == 12);
  CHECK(in.values.row(0) == d.normalizer().normalize(ramp(48, 2, 1).values.row(3 * 2)));
  CHECK(out.values.row(0) == d.normalizer().normalize(ramp(48, 2, 1).values.row(15 * 2)));
  CHECK_THROWS_AS(d.window_pair(25), DomainError);
  CHECK_THROWS_AS(WindowedDataset::make(ramp(23, 2, 1), 12), DataError);
  CHECK_THROWS_AS(WindowedDataset::make(ramp(48, 2, 1), 12, {0.5, 0.1, 0.1, 0.1, 0.1}), ConfigError);
}

TEST_CASE("splits are chronological, disjoint and never leak into training") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const Index t = test::random_index(rng, 1, 12);
    const Index total = test::random_index(rng, 2 * t + 10, 2 * t + 400);
    const WindowedDataset d = WindowedDataset::make(ramp(total, 2, 1), t);
    CAPTURE(total);
    CAPTURE(t);
    CHECK(d.num_windows() == total - 2 * t + 1);
    const IndexRange train = d.split(Split::train);
    CHECK(train.begin == 0);
    Index prev_end = train.end;
    for (Split s : {Split::val, Split::test0, Split::test1, Split::test2}) {
      const IndexRange r = d.split(s);
      CHECK(r.begin >= prev_end);
      CHECK(r.end >= r.begin);
      prev_end = std::max(prev_end, r.end);
    }
    CHECK(d.split(Split::test2).end == d.num_windows());
    // Last step touched by training vs first step of any later window.
    const Index last_train_step = train.end - 1 + 2 * t - 1;
    for (Split s : {Split::val, Split::test0, Split::test1, Split::test2}) {
      if (!d.split(s).empty()) CHECK(d.split(s).begin > last_train_step);
    }
    if (!d.split(Split::val).empty() && !d.split(Split::test0).empty()) {
      CHECK(d.split(Split::test0).begin > d.split(Split::val).end - 1);
    }
  }
}

TEST_CASE("default fractions") {
  const WindowedDataset d = WindowedDataset::make(ramp(1023, 2, 1), 12);
  CHECK(d.num_windows() == 1000);
  CHECK(d.split(Split::train).size() == 600);
  CHECK(d.split(Split::val).size() == 100 - 23);
  CHECK(d.purged().size() == 23);
  CHECK(d.split(Split::test0).size() == 100);
  CHECK(d.split(Split::test1).size() == 100);
  CHECK(d.split(Split::test2).size() == 100);
}

TEST_CASE("normalizer fits on training inputs and round-trips") {
  std::mt19937_64 rng(2);
  RawSeries s = ramp(100, 3, 2);
  s.values = test::random_matrix(300, 2, rng, -50, 50);
  const WindowedDataset d = WindowedDataset::make(s, 5);
  const Index fit_steps = d.split(Split::train).end - 1 + 5;
  const Matrix fit = s.values.topRows(fit_steps * 3);
  const RowVector mean = fit.colwise().mean();
  CHECK((d.normalizer().mean - mean).cwiseAbs().maxCoeff() <= 1e-12);
  const Matrix back = d.normalizer().denormalize(d.normalizer().normalize(s.values));
  CHECK((back - s.values).cwiseAbs().maxCoeff() < 1e-9);

  FlowTensor raw = FlowTensor::zeros(1, 1, 3, 2, Units::raw);
  const FlowTensor z = d.normalizer().normalize(raw);
  CHECK(z.units == Units::normalized);
  CHECK_THROWS_AS(d.normalizer().normalize(z), ContractError);
  CHECK_THROWS_AS(d.normalizer().denormalize(raw), ContractError);
}

TEST_CASE("constant channels pass through unscaled") {
  RawSeries s = ramp(40, 2, 2);
  s.values.col(1).setConstant(7.0);
  const WindowedDataset d = WindowedDataset::make(s, 4);
  CHECK(d.normalizer().scale(1) == 1.0);
  CHECK(d.normalizer().mean(1) == 0.0);
  CHECK(d.warnings().size() == 1);
  const Batch b = d.batch(std::vector<Index>{0});
  CHECK((b.inputs.values.col(1).array() == 7.0).all());
}

TEST_CASE("batches stack windows and mask zero targets") {
  RawSeries s = ramp(40, 2, 1);
  s.values(2 * 7 + 1, 0) = 0.0;  // step 7, node 1
  s.mask_zeros = true;
  const WindowedDataset d = WindowedDataset::make(s, 4);
  const std::vector<Index> w = {0, 3};
  const Batch b = d.batch(w);
  CHECK(b.inputs.batch == 2);
  CHECK(b.raw_targets.units == Units::raw);
  CHECK(b.raw_targets.values.row(8) == s.values.row((3 + 4) * 2));
  REQUIRE(b.mask_ptr() != nullptr);
  // Step 7 is the last target step of window 0 and the first of window 3.
  CHECK(b.mask.sum() == 14.0);
  CHECK(b.mask(3 * 2 + 1, 0) == 0.0);
  CHECK(b.mask(8 + 1, 0) == 0.0);
}

TEST_CASE("dataset directory round trip") {
  const Dataset ds = test::tiny_dataset(5, 30, 4);
  const auto dir = test::scratch_dir("dataset");
  save_dataset(dir, ds);
  const Dataset back = load_dataset(dir);
  CHECK(back.series.steps == 30);
  CHECK(back.series.nodes == 5);
  CHECK(back.series.values == ds.series.values);
  CHECK(back.graph.adjacency() == ds.graph.adjacency());
}

TEST_CASE("loading validates the files") {
  const Dataset ok = load_dataset(small_dir("ok", "1,2,3\n4,5,6\n"));
  CHECK(ok.series.steps == 2);
  CHECK(ok.series.nodes == 3);
  CHECK(ok.series.values(1 * 3 + 2, 0) == 6.0);

  try {
    load_dataset(small_dir("short_row", "1,2,3\n4,5\n"));
    FAIL("expected a data error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
  }
  try {
    load_dataset(small_dir("empty", ""));
    FAIL("expected a data error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("T_total = 0") != std::string::npos);
  }
  CHECK_THROWS_AS(load_dataset(small_dir("text", "1,x,3\n")), DataError);
  const auto missing = small_dir("missing", "1,2,3\n");
  std::filesystem::remove(missing / "adjacency.csv");
  CHECK_THROWS_AS(load_dataset(missing), DataError);
}

TEST_CASE("synthetic generation") {
  SyntheticConfig cfg;
  cfg.nodes = 6;
  cfg.steps = 2400;
  cfg.period = 24;
  cfg.noise_std = 0.1;
  cfg.seed = 7;

  const Dataset a = generate_synthetic(cfg), b = generate_synthetic(cfg);
  CHECK(a.series.values == b.series.values);
  CHECK(a.graph.adjacency() == b.graph.adjacency());

  const Index split = shift_start(cfg);
  CHECK(split == 1680);
  auto mean_gap = [&](const Dataset& d, Index node) {
    double pre = 0.0, post = 0.0;
    for (Index t = 0; t < cfg.steps; ++t) (t < split ? pre : post) += d.series.values(t * cfg.nodes + node, 0);
    return post / static_cast<double>(cfg.steps - split) - pre / static_cast<double>(split);
  };
  for (Index i = 0; i < cfg.nodes; ++i) CHECK(std::abs(mean_gap(a, i)) < 0.1);

  cfg.shift_magnitude = 2.0;
  const Dataset shifted = generate_synthetic(cfg);
  for (Index i = 0; i < cfg.nodes; ++i) {
    CAPTURE(i);
    const double expected = i < cfg.nodes / 2 ? 2.0 : 0.0;
    CHECK(std::abs(mean_gap(shifted, i) - expected) < 0.1);
  }

  cfg.shift_profile = parse_shift_profile("trend_break");
  CHECK(generate_synthetic(cfg).series.values != shifted.series.values);
  CHECK_THROWS_AS(parse_shift_profile("sideways"), ConfigError);
  cfg.nodes = 3;
  CHECK_THROWS_AS(generate_synthetic(cfg), ConfigError);
}
