#include "mip/backbone.hpp"

#include <cmath>

namespace mip {

void BackboneConfig::validate() const {
  if (num_st_layers < 1 || diffusion_order < 0 || hidden_dim < 1 || attention_heads < 1 ||
      input_dim < 1 || output_dim < 1 || horizon < 1 || ffn_dim < 1) {
    throw ConfigError("backbone configuration values must be positive");
  }
  if (hidden_dim % attention_heads != 0) {
    throw ConfigError("hidden_dim " + std::to_string(hidden_dim) +
                      " is not divisible by attention_heads " + std::to_string(attention_heads));
  }
}

Var ParamBinder::operator()(const std::string& name) const {
  if (mutable_ != nullptr && tape_.grad_enabled()) return tape_.param(mutable_->at(name));
  return tape_.constant(store_.at(name).value);
}

Var gnn_layer(Var states, const Propagators& props, const GnnWeights& weights) {
  const std::size_t order = props.forward == nullptr ? 0 : props.forward->size();
  const bool semantic = !weights.sem.empty();
  if (weights.fwd.size() != order + 1 || weights.bwd.size() != order + 1 ||
      (props.backward == nullptr ? 0 : props.backward->size()) != order) {
    throw ShapeError("gnn_layer: weight count does not match diffusion order");
  }
  if (semantic && (weights.sem.size() != order + 1 || props.semantic_order() != order)) {
    throw ShapeError("gnn_layer: semantic weight/power count does not match diffusion order");
  }
  // All z = 0 terms multiply the untouched states.
  Var self = ag::add(weights.fwd[0], weights.bwd[0]);
  if (semantic) self = ag::add(self, weights.sem[0]);
  Var out = ag::matmul(states, self);
  for (std::size_t z = 1; z <= order; ++z) {
    out = ag::add(out, ag::matmul(ag::propagate_blocks((*props.forward)[z - 1], states), weights.fwd[z]));
    out = ag::add(out, ag::matmul(ag::propagate_blocks((*props.backward)[z - 1], states), weights.bwd[z]));
    if (semantic) {
      const Var spread = props.semantic_fixed != nullptr
                             ? ag::propagate_blocks((*props.semantic_fixed)[z - 1], states)
                             : ag::propagate_blocks(props.semantic[z - 1], states);
      out = ag::add(out, ag::matmul(spread, weights.sem[z]));
    }
  }
  return out;
}

Var temporal_layer(Var states, const TemporalWeights& w, Index steps, Index nodes, int heads) {
  Var x = states;
  if (w.positional.valid()) x = ag::add_time_embedding(x, w.positional, nodes);
  const Var q = ag::matmul(x, w.wq);
  const Var k = ag::matmul(x, w.wk);
  const Var v = ag::matmul(x, w.wv);
  const Var attended = ag::temporal_attention(q, k, v, steps, nodes, heads);
  const Var hidden = ag::gelu(ag::add_row(ag::matmul(attended, w.ffn_w1), w.ffn_b1));
  return ag::add_row(ag::matmul(hidden, w.ffn_w2), w.ffn_b2);
}

Backbone::Backbone(std::string prefix, BackboneConfig config)
    : prefix_(std::move(prefix)), config_(config) {
  config_.validate();
}

std::string Backbone::name(int layer, const std::string& leaf) const {
  return prefix_ + ".layer" + std::to_string(layer) + "." + leaf;
}

namespace {

Matrix uniform(Index rows, Index cols, double fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(fan_in);
  std::uniform_real_distribution<double> u(-bound, bound);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

}  // namespace

void Backbone::init_params(ParameterStore& store, std::mt19937_64& rng) const {
  const Index d = config_.hidden_dim;
  const auto dd = static_cast<double>(d);
  if (config_.input_dim != d) {
    store.add(prefix_ + ".input.w", uniform(config_.input_dim, d, static_cast<double>(config_.input_dim), rng));
    store.add(prefix_ + ".input.b", Matrix::Zero(1, d));
  }
  if (config_.positional_embedding) {
    store.add(prefix_ + ".pos", uniform(config_.horizon, d, dd, rng));
  }
  for (int l = 0; l < config_.num_st_layers; ++l) {
    for (int z = 0; z <= config_.diffusion_order; ++z) {
      const std::string zs = std::to_string(z);
      store.add(name(l, "gnn.fwd" + zs), uniform(d, d, dd, rng));
      store.add(name(l, "gnn.bwd" + zs), uniform(d, d, dd, rng));
      if (config_.semantic) store.add(name(l, "gnn.sem" + zs), uniform(d, d, dd, rng));
    }
    store.add(name(l, "norm1.gain"), Matrix::Ones(1, d));
    store.add(name(l, "norm1.bias"), Matrix::Zero(1, d));
    store.add(name(l, "attn.wq"), uniform(d, d, dd, rng));
    store.add(name(l, "attn.wk"), uniform(d, d, dd, rng));
    store.add(name(l, "attn.wv"), uniform(d, d, dd, rng));
    store.add(name(l, "ffn.w1"), uniform(d, config_.ffn_dim, dd, rng));
    store.add(name(l, "ffn.b1"), Matrix::Zero(1, config_.ffn_dim));
    store.add(name(l, "ffn.w2"), uniform(config_.ffn_dim, d, static_cast<double>(config_.ffn_dim), rng));
    store.add(name(l, "ffn.b2"), Matrix::Zero(1, d));
    store.add(name(l, "norm2.gain"), Matrix::Ones(1, d));
    store.add(name(l, "norm2.bias"), Matrix::Zero(1, d));
  }
  store.add(prefix_ + ".head.w1", uniform(d, d, dd, rng));
  store.add(prefix_ + ".head.b1", Matrix::Zero(1, d));
  store.add(prefix_ + ".head.w2", uniform(d, config_.output_dim, dd, rng));
  store.add(prefix_ + ".head.b2", Matrix::Zero(1, config_.output_dim));
}

GnnWeights Backbone::gnn_weights(const ParamBinder& bind, int layer) const {
  GnnWeights w;
  for (int z = 0; z <= config_.diffusion_order; ++z) {
    const std::string zs = std::to_string(z);
    w.fwd.push_back(bind(name(layer, "gnn.fwd" + zs)));
    w.bwd.push_back(bind(name(layer, "gnn.bwd" + zs)));
    if (config_.semantic) w.sem.push_back(bind(name(layer, "gnn.sem" + zs)));
  }
  return w;
}

TemporalWeights Backbone::temporal_weights(const ParamBinder& bind, int layer) const {
  TemporalWeights w;
  w.wq = bind(name(layer, "attn.wq"));
  w.wk = bind(name(layer, "attn.wk"));
  w.wv = bind(name(layer, "attn.wv"));
  w.ffn_w1 = bind(name(layer, "ffn.w1"));
  w.ffn_b1 = bind(name(layer, "ffn.b1"));
  w.ffn_w2 = bind(name(layer, "ffn.w2"));
  w.ffn_b2 = bind(name(layer, "ffn.b2"));
  if (config_.positional_embedding) w.positional = bind(prefix_ + ".pos");
  return w;
}

Var Backbone::forward(const ParamBinder& bind, Var input, const Propagators& props,
                      Index nodes) const {
  if (input.cols() != config_.input_dim) {
    throw ShapeError(prefix_ + ": input width " + std::to_string(input.cols()) + ", expected " +
                     std::to_string(config_.input_dim));
  }
  if (nodes <= 0 || input.rows() % (config_.horizon * nodes) != 0) {
    throw ShapeError(prefix_ + ": " + std::to_string(input.rows()) +
                     " rows is not a multiple of T*N");
  }
  if (config_.semantic && static_cast<int>(props.semantic_order()) != config_.diffusion_order) {
    throw ShapeError(prefix_ + ": semantic powers missing");
  }
  Propagators local = props;
  if (!config_.semantic) {
    local.semantic.clear();
    local.semantic_fixed = nullptr;
  }

  Var g = input;
  if (config_.input_dim != config_.hidden_dim) {
    g = ag::add_row(ag::matmul(g, bind(prefix_ + ".input.w")), bind(prefix_ + ".input.b"));
  }
  Tape& tape = bind.tape();
  for (int l = 0; l < config_.num_st_layers; ++l) {
    const int mark = static_cast<int>(tape.size());
    const Var spatial = gnn_layer(g, local, gnn_weights(bind, l));
    const Var h = ag::layer_norm(ag::add(g, spatial), bind(name(l, "norm1.gain")),
                                 bind(name(l, "norm1.bias")));
    const Var temporal =
        temporal_layer(h, temporal_weights(bind, l), config_.horizon, nodes, config_.attention_heads);
    g = ag::layer_norm(ag::add(h, temporal), bind(name(l, "norm2.gain")), bind(name(l, "norm2.bias")));
    // Only g survives a layer during inference.
    tape.release(mark, g.id);
  }
  const Var hidden = ag::gelu(ag::add_row(ag::matmul(g, bind(prefix_ + ".head.w1")),
                                          bind(prefix_ + ".head.b1")));
  return ag::add_row(ag::matmul(hidden, bind(prefix_ + ".head.w2")), bind(prefix_ + ".head.b2"));
}

}  // namespace mip
