#pragma once

#include <random>
#include <string>
#include <vector>

#include "mip/autograd.hpp"

namespace mip {

struct BackboneConfig {
  int num_st_layers = 3;
  int diffusion_order = 2;  // Z
  Index hidden_dim = 32;
  int attention_heads = 1;
  Index input_dim = 32;
  Index output_dim = 1;
  Index horizon = 12;  // T
  Index ffn_dim = 64;
  bool positional_embedding = true;
  /// Adds the learned-semantic-graph term to every GNN layer.
  bool semantic = true;

  void validate() const;
};

/// Resolves parameter names to tape leaves. A frozen binder reads values as
/// constants so that a const model can run inference.
class ParamBinder {
 public:
  ParamBinder(Tape& tape, ParameterStore& store) : tape_(tape), mutable_(&store), store_(store) {}
  ParamBinder(Tape& tape, const ParameterStore& store) : tape_(tape), store_(store) {}

  Var operator()(const std::string& name) const;
  Tape& tape() const { return tape_; }

 private:
  Tape& tape_;
  ParameterStore* mutable_ = nullptr;
  const ParameterStore& store_;
};

/// Graph operators for one forward pass. Powers are z = 1..Z; z = 0 is the
/// identity and never materialized.
struct Propagators {
  const std::vector<SparseMatrix>* forward = nullptr;
  const std::vector<SparseMatrix>* backward = nullptr;
  std::vector<Var> semantic;
  /// Constant semantic powers; used instead of `semantic` when set.
  const std::vector<Matrix>* semantic_fixed = nullptr;

  std::size_t semantic_order() const {
    return semantic_fixed != nullptr ? semantic_fixed->size() : semantic.size();
  }
};

/// Weights of one GNN layer, index z = 0..Z. `sem` is empty when the layer
/// has no semantic term.
struct GnnWeights {
  std::vector<Var> fwd;
  std::vector<Var> bwd;
  std::vector<Var> sem;
};

/// sum_z (P_f^z G W1^z + P_b^z G W2^z + A_sem^z G W3^z) applied to every
/// block of N rows. No activation.
Var gnn_layer(Var states, const Propagators& props, const GnnWeights& weights);

struct TemporalWeights {
  Var wq;
  Var wk;
  Var wv;
  Var ffn_w1;
  Var ffn_b1;
  Var ffn_w2;
  Var ffn_b2;
  Var positional;  // invalid when disabled
};

/// Adds the positional embedding, attends over time per node series, then
/// applies the two-layer feedforward network.
Var temporal_layer(Var states, const TemporalWeights& w, Index steps, Index nodes, int heads);

/// Stacked ST layers plus prediction head. Parameters live in a
/// ParameterStore under `prefix`.
class Backbone {
 public:
  Backbone() = default;
  Backbone(std::string prefix, BackboneConfig config);

  /// Adds every parameter; weights uniform in +-1/sqrt(fan_in), biases 0.
  void init_params(ParameterStore& store, std::mt19937_64& rng) const;

  /// input: (B*T*N) x input_dim, rows ordered (b, t, n). Returns
  /// (B*T*N) x output_dim.
  Var forward(const ParamBinder& bind, Var input, const Propagators& props, Index nodes) const;

  GnnWeights gnn_weights(const ParamBinder& bind, int layer) const;
  TemporalWeights temporal_weights(const ParamBinder& bind, int layer) const;

  const BackboneConfig& config() const { return config_; }
  const std::string& prefix() const { return prefix_; }
  std::string name(int layer, const std::string& leaf) const;

 private:
  std::string prefix_;
  BackboneConfig config_;
};

}  // namespace mip
