#include "doctest.h"
#include "json.hpp"
#include "mip/config.hpp"
#include "support.hpp"

using namespace mip;

TEST_CASE("config json round trip") {
  RunConfig cfg;
  cfg.data.window = 6;
  cfg.model.num_prototypes = 7;
  cfg.loss.lambda1 = 0.25;
  cfg.train.batch_size = 5;
  cfg.intervention.seed = 42;
  const RunConfig back = parse_run_config(run_config_json(cfg));
  CHECK(back.data.window == 6);
  CHECK(back.model.num_prototypes == 7);
  CHECK(back.loss.lambda1 == 0.25);
  CHECK(back.train.batch_size == 5);
  CHECK(back.intervention.seed == 42);
  CHECK(run_config_json(back) == run_config_json(cfg));

  const auto dir = test::scratch_dir("config");
  save_run_config(dir / "c.json", cfg);
  CHECK(run_config_json(load_run_config(dir / "c.json")) == run_config_json(cfg));
  CHECK_THROWS_AS(load_run_config(dir / "none.json"), ConfigError);
}

TEST_CASE("parsing is strict") {
  CHECK_NOTHROW(parse_run_config("{}"));
  CHECK_THROWS_AS(parse_run_config(R"({"train": {"epochs": 1}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"extra": {}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"train": {"batch_size": "big"}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"model": {"variant": "everything"}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"model": {"init_prompt": "both"}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"data": {"synthetic": {"nodez": 4}}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("{not json"), ConfigError);
  CHECK(parse_run_config(R"({"model": {"variant": "backbone"}})").model.variant == Variant::backbone);
}

TEST_CASE("validation") {
  RunConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  RunConfig bad = cfg;
  bad.data.source = "ftp";
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.data.source = "directory";
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.data.fractions = {0.5, 0.1, 0.1, 0.1, 0.1};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.data.grid_rows = 2;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.data.mask_zeros = "maybe";
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.intervention.ratio = 1.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("overrides") {
  RunConfig cfg;
  apply_override(cfg, "data.synthetic.seed=3");
  CHECK(cfg.data.synthetic.seed == 3);
  apply_override(cfg, "loss.lambda1=0.75");
  CHECK(cfg.loss.lambda1 == 0.75);
  apply_override(cfg, "model.variant=add-prompt");
  CHECK(cfg.model.variant == Variant::add_prompt);
  apply_override(cfg, "data.path=123");
  CHECK(cfg.data.path == "123");
  apply_override(cfg, "train.detach_aux=true");
  CHECK(cfg.train.detach_aux);

  const std::string before = run_config_json(cfg);
  CHECK_THROWS_AS(apply_override(cfg, "train.epochs=3"), ConfigError);
  CHECK_THROWS_AS(apply_override(cfg, "no_equals"), ConfigError);
  CHECK_THROWS_AS(apply_override(cfg, "=3"), ConfigError);
  CHECK_THROWS_AS(apply_override(cfg, "train.batch_size=\"x\""), ConfigError);
  CHECK_THROWS_AS(apply_override(cfg, "loss.lambda1=-1"), ConfigError);
  CHECK(run_config_json(cfg) == before);

  // Dependent keys only need to agree once all overrides are in.
  RunConfig fresh;
  CHECK_THROWS_AS(apply_override(fresh, "data.source=directory"), ConfigError);
  apply_overrides(fresh, {"data.source=directory", "data.path=/somewhere"});
  CHECK(fresh.data.source == "directory");
}

TEST_CASE("materializing data") {
  DataConfig d;
  d.synthetic.nodes = 6;
  d.synthetic.steps = 200;
  d.window = 4;
  const Dataset ds = materialize_dataset(d);
  CHECK(ds.series.nodes == 6);
  CHECK(make_windows(ds, d).num_windows() == 200 - 8 + 1);

  d.grid_rows = 2;
  d.grid_cols = 3;
  CHECK(materialize_dataset(d).graph.adjacency() == GeoGraph::grid(2, 3).adjacency());
  d.grid_cols = 4;
  CHECK_THROWS_AS(materialize_dataset(d), ConfigError);

  d.grid_rows = d.grid_cols = 0;
  d.mask_zeros = "true";
  CHECK(materialize_dataset(d).series.mask_zeros);

  const auto dir = test::scratch_dir("materialize");
  save_dataset(dir, ds);
  DataConfig from_dir;
  from_dir.source = "directory";
  from_dir.path = dir.string();
  CHECK(materialize_dataset(from_dir).series.values == ds.series.values);
}
