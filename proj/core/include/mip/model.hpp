#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mip/backbone.hpp"
#include "mip/graph.hpp"
#include "mip/memory.hpp"
#include "mip/tensor.hpp"

namespace mip {

/// Ablation variants. `full` is the complete model.
enum class Variant { backbone, add_adp_adj, add_prompt, wo_adp_adj, wo_invariant_learning, full };

struct VariantFlags {
  bool prompts = true;             // backbone consumes memory prompts (else the raw query)
  bool semantic = true;            // memory-derived semantic graph in the GNN
  bool invariant_learning = true;  // auxiliary predictor + invariant loss
  bool regularization = true;      // memory regularization loss
};

VariantFlags variant_flags(Variant v);
Variant parse_variant(const std::string& name);
const char* variant_name(Variant v);
inline constexpr Variant kAllVariants[] = {Variant::backbone,   Variant::add_adp_adj,
                                           Variant::add_prompt, Variant::wo_adp_adj,
                                           Variant::wo_invariant_learning, Variant::full};

enum class InitPrompt { invariant, variant };

struct ModelConfig {
  Index num_prototypes = 30;  // M
  Index dim = 32;             // d
  int num_st_layers = 3;
  int diffusion_order = 2;
  int attention_heads = 1;
  Index ffn_dim = 64;
  bool positional_embedding = true;
  InitPrompt init_prompt = InitPrompt::invariant;
  Variant variant = Variant::full;
  std::string aux_predictor = "backbone";
  std::uint64_t seed = 0;

  void validate() const;
};

struct ForwardOptions {
  bool with_aux = false;
  /// Row map applied to the variant prompts before the auxiliary predictor
  /// (see swap_row_map); null means no intervention.
  const std::vector<Index>* swap_map = nullptr;
  /// Cuts the auxiliary predictor's inputs from the prompt extractor.
  bool detach_aux_inputs = false;
  /// Precomputed semantic powers (frozen inference).
  const std::vector<Matrix>* semantic_powers = nullptr;
};

struct ForwardOutputs {
  Var prediction;
  Var aux_prediction;
  Var invariant_prompts;
  Var variant_prompts;
  Var bank;
  Matrix invariant_scores;
};

/// Every trainable parameter group plus the fixed graph operators.
class MipModel {
 public:
  /// Fresh parameters drawn from config.seed.
  MipModel(ModelConfig config, GeoGraph graph, Index features, Index steps);
  /// Restores from stored parameters; throws ConfigError on any missing or
  /// mis-shaped tensor.
  MipModel(ModelConfig config, GeoGraph graph, Index features, Index steps, ParameterStore params);

  ForwardOutputs forward(const ParamBinder& bind, const Matrix& inputs,
                         const ForwardOptions& options = {}) const;

  /// Frozen inference: (B*T*N) x k normalized inputs -> predictions.
  Matrix predict(const Matrix& inputs) const;

  /// Invariant/variant prompts and scores for a single-sample input.
  PromptSet prompts(const FlowTensor& inputs) const;
  /// Runs the auxiliary predictor on explicit prompt tensors.
  Matrix aux_predict(const PromptTensor& invariant, const PromptTensor& intervened_variant) const;

  /// Plain-value semantic adjacency; requires the semantic graph.
  Matrix semantic_adjacency() const;
  std::vector<Matrix> semantic_powers() const;

  const ModelConfig& config() const { return config_; }
  VariantFlags flags() const { return variant_flags(config_.variant); }
  const GeoGraph& graph() const { return graph_; }
  const TransitionPair& transitions() const { return transitions_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }
  const Backbone& backbone() const { return backbone_; }
  const Backbone& aux_backbone() const { return aux_; }
  Index nodes() const { return graph_.num_nodes(); }
  Index features() const { return features_; }
  Index steps() const { return steps_; }

  MemoryBank memory_bank() const;
  QueryParams query_params() const;

 private:
  void setup();
  void init_params();
  Var semantic_var(const ParamBinder& bind, Var bank) const;

  ModelConfig config_;
  GeoGraph graph_;
  Index features_ = 0;
  Index steps_ = 0;
  TransitionPair transitions_;
  std::vector<SparseMatrix> forward_powers_;
  std::vector<SparseMatrix> backward_powers_;
  Backbone backbone_;
  Backbone aux_;
  ParameterStore params_;
};

/// Inference wrapper that evaluates the semantic graph and its powers once.
class FrozenPredictor {
 public:
  explicit FrozenPredictor(const MipModel& model);
  Matrix predict(const Matrix& inputs) const;

 private:
  const MipModel& model_;
  std::vector<Matrix> semantic_powers_;
};

}  // namespace mip
