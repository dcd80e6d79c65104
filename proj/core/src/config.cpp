#include "mip/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json_io.hpp"

namespace mip {

using nlohmann::json;

namespace {

// Reads members of one JSON object and rejects keys nobody asked for.
class Section {
 public:
  Section(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where_ + "." + key + " has the wrong type");
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (seen_.count(key) == 0) throw ConfigError("unknown config key " + where_ + "." + key);
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

json synthetic_json(const SyntheticConfig& s) {
  return {{"nodes", s.nodes},
          {"steps", s.steps},
          {"features", s.features},
          {"shift_profile", shift_profile_name(s.shift_profile)},
          {"shift_magnitude", s.shift_magnitude},
          {"shift_fraction", s.shift_fraction},
          {"period", s.period},
          {"noise_std", s.noise_std},
          {"radius", s.radius},
          {"seed", s.seed}};
}

SyntheticConfig synthetic_from_json(const json& j) {
  SyntheticConfig s;
  Section r(j, "data.synthetic");
  std::string profile = shift_profile_name(s.shift_profile);
  r.get("nodes", s.nodes);
  r.get("steps", s.steps);
  r.get("features", s.features);
  r.get("shift_profile", profile);
  r.get("shift_magnitude", s.shift_magnitude);
  r.get("shift_fraction", s.shift_fraction);
  r.get("period", s.period);
  r.get("noise_std", s.noise_std);
  r.get("radius", s.radius);
  r.get("seed", s.seed);
  r.finish();
  s.shift_profile = parse_shift_profile(profile);
  return s;
}

}  // namespace

namespace detail {

json to_json(const ModelConfig& m) {
  return {{"num_prototypes", m.num_prototypes},
          {"dim", m.dim},
          {"num_st_layers", m.num_st_layers},
          {"diffusion_order", m.diffusion_order},
          {"attention_heads", m.attention_heads},
          {"ffn_dim", m.ffn_dim},
          {"positional_embedding", m.positional_embedding},
          {"init_prompt", m.init_prompt == InitPrompt::invariant ? "invariant" : "variant"},
          {"variant", variant_name(m.variant)},
          {"aux_predictor", m.aux_predictor},
          {"seed", m.seed}};
}

ModelConfig model_config_from_json(const json& j, const std::string& where) {
  ModelConfig m;
  Section r(j, where);
  std::string init = "invariant";
  std::string variant = variant_name(m.variant);
  r.get("num_prototypes", m.num_prototypes);
  r.get("dim", m.dim);
  r.get("num_st_layers", m.num_st_layers);
  r.get("diffusion_order", m.diffusion_order);
  r.get("attention_heads", m.attention_heads);
  r.get("ffn_dim", m.ffn_dim);
  r.get("positional_embedding", m.positional_embedding);
  r.get("init_prompt", init);
  r.get("variant", variant);
  r.get("aux_predictor", m.aux_predictor);
  r.get("seed", m.seed);
  r.finish();
  if (init == "invariant") {
    m.init_prompt = InitPrompt::invariant;
  } else if (init == "variant") {
    m.init_prompt = InitPrompt::variant;
  } else {
    throw ConfigError(where + ".init_prompt must be 'invariant' or 'variant'");
  }
  m.variant = parse_variant(variant);
  return m;
}

json to_json(const RunConfig& c) {
  json data = {{"source", c.data.source},
               {"path", c.data.path},
               {"window", c.data.window},
               {"fractions", c.data.fractions},
               {"mask_zeros", c.data.mask_zeros},
               {"grid_rows", c.data.grid_rows},
               {"grid_cols", c.data.grid_cols},
               {"synthetic", synthetic_json(c.data.synthetic)}};
  json loss = {{"lambda1", c.loss.lambda1}, {"lambda2", c.loss.lambda2}, {"margin", c.loss.margin}};
  json train = {{"learning_rate", c.train.learning_rate},
                {"batch_size", c.train.batch_size},
                {"max_epochs", c.train.max_epochs},
                {"early_stop_patience", c.train.early_stop_patience},
                {"grad_clip_norm", c.train.grad_clip_norm},
                {"seed", c.train.seed},
                {"detach_aux", c.train.detach_aux}};
  json intervention = {{"ratio", c.intervention.ratio}, {"seed", c.intervention.seed}};
  return {{"data", data}, {"model", to_json(c.model)}, {"loss", loss}, {"train", train},
          {"intervention", intervention}};
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  Section root(j, "config");
  if (const json* d = root.child("data")) {
    Section r(*d, "data");
    r.get("source", c.data.source);
    r.get("path", c.data.path);
    r.get("window", c.data.window);
    r.get("fractions", c.data.fractions);
    r.get("mask_zeros", c.data.mask_zeros);
    r.get("grid_rows", c.data.grid_rows);
    r.get("grid_cols", c.data.grid_cols);
    if (const json* s = r.child("synthetic")) c.data.synthetic = synthetic_from_json(*s);
    r.finish();
  }
  if (const json* m = root.child("model")) c.model = model_config_from_json(*m, "model");
  if (const json* l = root.child("loss")) {
    Section r(*l, "loss");
    r.get("lambda1", c.loss.lambda1);
    r.get("lambda2", c.loss.lambda2);
    r.get("margin", c.loss.margin);
    r.finish();
  }
  if (const json* t = root.child("train")) {
    Section r(*t, "train");
    r.get("learning_rate", c.train.learning_rate);
    r.get("batch_size", c.train.batch_size);
    r.get("max_epochs", c.train.max_epochs);
    r.get("early_stop_patience", c.train.early_stop_patience);
    r.get("grad_clip_norm", c.train.grad_clip_norm);
    r.get("seed", c.train.seed);
    r.get("detach_aux", c.train.detach_aux);
    r.finish();
  }
  if (const json* i = root.child("intervention")) {
    Section r(*i, "intervention");
    r.get("ratio", c.intervention.ratio);
    r.get("seed", c.intervention.seed);
    r.finish();
  }
  root.finish();
  return c;
}

}  // namespace detail

void RunConfig::validate() const {
  if (data.source != "synthetic" && data.source != "directory") {
    throw ConfigError("data.source must be 'synthetic' or 'directory', got '" + data.source + "'");
  }
  if (data.source == "directory" && data.path.empty()) throw ConfigError("data.path is required");
  if (data.window < 1) throw ConfigError("data.window must be positive");
  if (data.mask_zeros != "meta" && data.mask_zeros != "true" && data.mask_zeros != "false") {
    throw ConfigError("data.mask_zeros must be 'meta', 'true' or 'false'");
  }
  if ((data.grid_rows > 0) != (data.grid_cols > 0)) {
    throw ConfigError("data.grid_rows and data.grid_cols must be set together");
  }
  double total = 0.0;
  for (double f : data.fractions) {
    if (!(f >= 0.0)) throw ConfigError("data.fractions must be nonnegative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("data.fractions must sum to 1");
  model.validate();
  loss.validate();
  train.validate();
  try {
    intervention.validate();
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
}

RunConfig parse_run_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig cfg = detail::run_config_from_json(j);
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_run_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string run_config_json(const RunConfig& cfg, int indent) {
  return detail::to_json(cfg).dump(indent);
}

void save_run_config(const std::filesystem::path& path, const RunConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << run_config_json(cfg) << '\n';
}

namespace {

void assign(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' is not of the form section.key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(part)) throw ConfigError("unknown config key " + key);
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  // Keep strings as strings ("--set data.path=123" should not become a number).
  if (node->is_string() && !value.is_string()) value = text;
  *node = value;
}

}  // namespace

void apply_overrides(RunConfig& cfg, const std::vector<std::string>& assignments) {
  json j = detail::to_json(cfg);
  for (const std::string& a : assignments) assign(j, a);
  RunConfig next = detail::run_config_from_json(j);
  next.validate();
  cfg = next;
}

void apply_override(RunConfig& cfg, const std::string& assignment) { apply_overrides(cfg, {assignment}); }

Dataset materialize_dataset(const DataConfig& cfg) {
  Dataset data = cfg.source == "synthetic" ? generate_synthetic(cfg.synthetic) : load_dataset(cfg.path);
  if (cfg.mask_zeros == "true") data.series.mask_zeros = true;
  if (cfg.mask_zeros == "false") data.series.mask_zeros = false;
  if (cfg.grid_rows > 0) {
    if (cfg.grid_rows * cfg.grid_cols != data.series.nodes) {
      throw ConfigError("grid " + std::to_string(cfg.grid_rows) + "x" + std::to_string(cfg.grid_cols) +
                        " does not match N = " + std::to_string(data.series.nodes));
    }
    data.graph = GeoGraph::grid(cfg.grid_rows, cfg.grid_cols);
  }
  return data;
}

WindowedDataset make_windows(const Dataset& data, const DataConfig& cfg) {
  return WindowedDataset::make(data.series, cfg.window, cfg.fractions);
}

}  // namespace mip
