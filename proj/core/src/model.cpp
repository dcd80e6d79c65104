#include "mip/model.hpp"

#include <cmath>
#include <random>

namespace mip {

VariantFlags variant_flags(Variant v) {
  switch (v) {
    case Variant::backbone: return {false, false, false, false};
    case Variant::add_adp_adj: return {false, true, false, false};
    case Variant::add_prompt: return {true, false, false, true};
    case Variant::wo_adp_adj: return {true, false, true, true};
    case Variant::wo_invariant_learning: return {true, true, false, true};
    case Variant::full: return {true, true, true, true};
  }
  return {};
}

Variant parse_variant(const std::string& name) {
  for (Variant v : kAllVariants) {
    if (name == variant_name(v)) return v;
  }
  throw ConfigError("unknown model variant '" + name + "'");
}

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::backbone: return "backbone";
    case Variant::add_adp_adj: return "add-adp-adj";
    case Variant::add_prompt: return "add-prompt";
    case Variant::wo_adp_adj: return "w/o-adp-adj";
    case Variant::wo_invariant_learning: return "w/o-invariant-learning";
    case Variant::full: return "full";
  }
  return "?";
}

void ModelConfig::validate() const {
  if (num_prototypes < 2) {
    throw ConfigError("model.num_prototypes must be at least 2, got " + std::to_string(num_prototypes));
  }
  if (dim < 1 || num_st_layers < 1 || diffusion_order < 0 || attention_heads < 1 || ffn_dim < 1) {
    throw ConfigError("model dimensions must be positive");
  }
  if (dim % attention_heads != 0) throw ConfigError("model.dim must be divisible by attention_heads");
  if (aux_predictor != "backbone") {
    throw ConfigError("model.aux_predictor '" + aux_predictor + "' is not available (backbone)");
  }
}

MipModel::MipModel(ModelConfig config, GeoGraph graph, Index features, Index steps)
    : config_(std::move(config)), graph_(std::move(graph)), features_(features), steps_(steps) {
  setup();
  init_params();
}

MipModel::MipModel(ModelConfig config, GeoGraph graph, Index features, Index steps,
                   ParameterStore params)
    : config_(std::move(config)), graph_(std::move(graph)), features_(features), steps_(steps) {
  setup();
  init_params();
  // Shapes come from the fresh initialization; values from the stored tensors.
  std::size_t matched = 0;
  for (auto& [name, p] : params_) {
    if (!params.contains(name)) throw ConfigError("checkpoint is missing parameter '" + name + "'");
    const Matrix& stored = params.at(name).value;
    if (stored.rows() != p.value.rows() || stored.cols() != p.value.cols()) {
      throw ConfigError("parameter '" + name + "' has shape " + shape_str(stored) + ", model expects " +
                        shape_str(p.value));
    }
    p.value = stored;
    ++matched;
  }
  if (matched != params.size()) throw ConfigError("checkpoint holds parameters this model does not use");
}

void MipModel::setup() {
  config_.validate();
  if (features_ < 1 || steps_ < 1) throw ConfigError("model needs k >= 1 and T >= 1");
  transitions_ = build_transitions(graph_);
  forward_powers_ = transition_powers(transitions_.forward, config_.diffusion_order);
  backward_powers_ = transition_powers(transitions_.backward, config_.diffusion_order);

  const VariantFlags f = flags();
  BackboneConfig main;
  main.num_st_layers = config_.num_st_layers;
  main.diffusion_order = config_.diffusion_order;
  main.hidden_dim = config_.dim;
  main.attention_heads = config_.attention_heads;
  main.input_dim = config_.dim;
  main.output_dim = features_;
  main.horizon = steps_;
  main.ffn_dim = config_.ffn_dim;
  main.positional_embedding = config_.positional_embedding;
  main.semantic = f.semantic;
  backbone_ = Backbone("backbone", main);

  BackboneConfig aux = main;
  aux.input_dim = 2 * config_.dim;
  aux.semantic = false;
  aux_ = Backbone("aux", aux);
}

void MipModel::init_params() {
  std::mt19937_64 rng(config_.seed);
  const VariantFlags f = flags();
  const Index d = config_.dim;
  const Index m = config_.num_prototypes;
  const Index n = nodes();

  auto uniform = [&rng](Index rows, Index cols, double fan_in) {
    const double bound = 1.0 / std::sqrt(fan_in);
    std::uniform_real_distribution<double> u(-bound, bound);
    Matrix out(rows, cols);
    for (Index i = 0; i < out.size(); ++i) out.data()[i] = u(rng);
    return out;
  };

  params_.add("query.weight", uniform(features_, d, static_cast<double>(features_)));
  params_.add("query.bias", Matrix::Zero(1, d));
  if (f.prompts || f.semantic) {
    params_.add("memory.bank", MemoryBank::random(m, d, rng).prototypes());
  }
  if (f.semantic) {
    params_.add("semantic.proj_a", uniform(n, m, static_cast<double>(m)));
    params_.add("semantic.proj_b", uniform(n, m, static_cast<double>(m)));
  }
  backbone_.init_params(params_, rng);
  if (f.invariant_learning) aux_.init_params(params_, rng);
}

Var MipModel::semantic_var(const ParamBinder& bind, Var bank) const {
  return mip::semantic_adjacency(bank, bind("semantic.proj_a"), bind("semantic.proj_b"));
}

ForwardOutputs MipModel::forward(const ParamBinder& bind, const Matrix& inputs,
                                 const ForwardOptions& options) const {
  const Index block = steps_ * nodes();
  if (inputs.cols() != features_ || inputs.rows() == 0 || inputs.rows() % block != 0) {
    throw ShapeError("model input " + shape_str(inputs) + " is not (B*" + std::to_string(steps_) +
                     "*" + std::to_string(nodes()) + ") x " + std::to_string(features_));
  }
  Tape& tape = bind.tape();
  const VariantFlags f = flags();
  ForwardOutputs out;

  const Var x = tape.constant(inputs);
  const Var query = ag::add_row(ag::matmul(x, bind("query.weight")), bind("query.bias"));
  if (f.prompts || f.semantic) out.bank = bind("memory.bank");

  Var main_input = query;
  if (f.prompts) {
    const Var logits = ag::matmul_nt(query, out.bank);
    const Var inv_scores = ag::row_softmax(logits);
    out.invariant_scores = inv_scores.value();
    out.invariant_prompts = ag::matmul(inv_scores, out.bank);
    const bool need_variant =
        config_.init_prompt == InitPrompt::variant || (options.with_aux && f.invariant_learning);
    if (need_variant) {
      out.variant_prompts = ag::matmul(ag::row_softmax(ag::neg(logits)), out.bank);
    }
    main_input =
        config_.init_prompt == InitPrompt::invariant ? out.invariant_prompts : out.variant_prompts;
  }

  Propagators props;
  props.forward = &forward_powers_;
  props.backward = &backward_powers_;
  if (f.semantic) {
    if (options.semantic_powers != nullptr) {
      props.semantic_fixed = options.semantic_powers;
    } else {
      const Var adj = semantic_var(bind, out.bank);
      for (int z = 1; z <= config_.diffusion_order; ++z) {
        props.semantic.push_back(z == 1 ? adj : ag::matmul(props.semantic.back(), adj));
      }
    }
  }
  out.prediction = backbone_.forward(bind, main_input, props, nodes());

  if (options.with_aux) {
    if (!f.invariant_learning) throw ContractError("variant '" + std::string(variant_name(config_.variant)) + "' has no auxiliary predictor");
    Var inv = out.invariant_prompts;
    Var var = out.variant_prompts;
    if (options.detach_aux_inputs) {
      inv = ag::detach(inv);
      var = ag::detach(var);
    }
    if (options.swap_map != nullptr) {
      if (static_cast<Index>(options.swap_map->size()) != inputs.rows()) {
        throw ShapeError("intervention row map does not cover the batch");
      }
      var = ag::gather_rows(var, *options.swap_map);
    }
    Propagators geo;
    geo.forward = &forward_powers_;
    geo.backward = &backward_powers_;
    out.aux_prediction = aux_.forward(bind, ag::concat_cols(inv, var), geo, nodes());
  }
  return out;
}

Matrix MipModel::predict(const Matrix& inputs) const {
  Tape tape(false);
  ParamBinder bind(tape, params_);
  return forward(bind, inputs).prediction.value();
}

PromptSet MipModel::prompts(const FlowTensor& inputs) const {
  if (!flags().prompts) throw ContractError("this variant does not extract prompts");
  if (inputs.steps != steps_ || inputs.nodes != nodes() || inputs.features != features_) {
    throw ShapeError("prompt extraction: input dims do not match the model");
  }
  return extract_prompts(inputs, query_params(), memory_bank());
}

Matrix MipModel::aux_predict(const PromptTensor& invariant, const PromptTensor& intervened_variant) const {
  if (!flags().invariant_learning) throw ContractError("this variant has no auxiliary predictor");
  if (invariant.steps != intervened_variant.steps || invariant.nodes != intervened_variant.nodes ||
      invariant.dim != intervened_variant.dim) {
    throw ShapeError("aux_predict: prompt tensors differ in shape");
  }
  if (invariant.kind != PromptKind::invariant || intervened_variant.kind != PromptKind::variant) {
    throw ContractError("aux_predict expects (invariant, variant) prompts");
  }
  Tape tape(false);
  ParamBinder bind(tape, params_);
  Propagators geo;
  geo.forward = &forward_powers_;
  geo.backward = &backward_powers_;
  const Var in = ag::concat_cols(tape.constant(invariant.values), tape.constant(intervened_variant.values));
  return aux_.forward(bind, in, geo, nodes()).value();
}

Matrix MipModel::semantic_adjacency() const {
  if (!flags().semantic) throw ContractError("this variant has no semantic graph");
  return build_semantic_adjacency(params_.at("memory.bank").value,
                                  {params_.at("semantic.proj_a").value, params_.at("semantic.proj_b").value});
}

std::vector<Matrix> MipModel::semantic_powers() const {
  std::vector<Matrix> powers;
  if (!flags().semantic) return powers;
  const Matrix adj = semantic_adjacency();
  for (int z = 1; z <= config_.diffusion_order; ++z) {
    powers.push_back(z == 1 ? adj : Matrix(powers.back() * adj));
  }
  return powers;
}

MemoryBank MipModel::memory_bank() const { return MemoryBank(params_.at("memory.bank").value); }

QueryParams MipModel::query_params() const {
  return QueryParams{params_.at("query.weight").value, params_.at("query.bias").value.row(0)};
}

FrozenPredictor::FrozenPredictor(const MipModel& model)
    : model_(model), semantic_powers_(model.semantic_powers()) {}

Matrix FrozenPredictor::predict(const Matrix& inputs) const {
  Tape tape(false);
  ParamBinder bind(tape, model_.params());
  ForwardOptions opts;
  if (model_.flags().semantic) opts.semantic_powers = &semantic_powers_;
  return model_.forward(bind, inputs, opts).prediction.value();
}

}  // namespace mip
