#include "scout/model.hpp"

#include <stdexcept>

#include "scout/ops.hpp"

namespace scout {

Tensor ParameterStore::add(std::string name, Tensor t, bool is_new) {
  for (const auto& e : entries_) {
    if (e.name == name) {
      throw std::invalid_argument("ParameterStore: duplicate parameter '" + name + "'");
    }
  }
  t.set_requires_grad(true);
  entries_.push_back({std::move(name), t, is_new});
  return t;
}

Tensor ParameterStore::find(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e.tensor;
  }
  throw std::invalid_argument("ParameterStore: no parameter named '" +
                              std::string(name) + "'");
}

std::vector<Tensor> ParameterStore::tensors() const {
  std::vector<Tensor> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.tensor);
  return out;
}

std::size_t ParameterStore::scalar_count(bool new_only) const {
  std::size_t n = 0;
  for (const auto& e : entries_) {
    if (!new_only || e.is_new) n += e.tensor.size();
  }
  return n;
}

namespace {

constexpr double kInitStd = 0.02;

}  // namespace

Transformer::Transformer(ModelConfig config, std::uint64_t seed)
    : config_(config) {
  config_.validate();
  Rng rng = Rng::stream(seed, "init/backbone");
  const std::size_t d = config_.model_dim;
  const std::size_t hidden = 4 * d;

  tok_embed_ = Tensor::randn({config_.vocab_size, d}, rng, kInitStd);
  pos_embed_ = Tensor::randn({config_.max_seq_len, d}, rng, kInitStd);
  layers_.resize(config_.num_layers);
  for (auto& layer : layers_) {
    layer.ln1_gain = Tensor::full({d}, 1.0);
    layer.ln1_bias = Tensor::zeros({d});
    layer.wq = Tensor::randn({d, d}, rng, kInitStd);
    layer.wk = Tensor::randn({d, d}, rng, kInitStd);
    layer.wv = Tensor::randn({d, d}, rng, kInitStd);
    layer.wo = Tensor::randn({d, d}, rng, kInitStd);
    layer.ln2_gain = Tensor::full({d}, 1.0);
    layer.ln2_bias = Tensor::zeros({d});
    layer.ffn_w1 = Tensor::randn({d, hidden}, rng, kInitStd);
    layer.ffn_b1 = Tensor::zeros({hidden});
    layer.ffn_w2 = Tensor::randn({hidden, d}, rng, kInitStd);
    layer.ffn_b2 = Tensor::zeros({d});
  }
  final_ln_gain_ = Tensor::full({d}, 1.0);
  final_ln_bias_ = Tensor::zeros({d});
  out_proj_ = Tensor::randn({d, config_.vocab_size}, rng, kInitStd);
  register_params();
}

void Transformer::register_params() {
  params_ = ParameterStore();
  params_.add("embed.tok", tok_embed_);
  params_.add("embed.pos", pos_embed_);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::string prefix = "layer." + std::to_string(i) + ".";
    auto& l = layers_[i];
    params_.add(prefix + "ln1.gain", l.ln1_gain);
    params_.add(prefix + "ln1.bias", l.ln1_bias);
    params_.add(prefix + "attn.wq", l.wq);
    params_.add(prefix + "attn.wk", l.wk);
    params_.add(prefix + "attn.wv", l.wv);
    params_.add(prefix + "attn.wo", l.wo);
    params_.add(prefix + "ln2.gain", l.ln2_gain);
    params_.add(prefix + "ln2.bias", l.ln2_bias);
    params_.add(prefix + "ffn.w1", l.ffn_w1);
    params_.add(prefix + "ffn.b1", l.ffn_b1);
    params_.add(prefix + "ffn.w2", l.ffn_w2);
    params_.add(prefix + "ffn.b2", l.ffn_b2);
  }
  params_.add("final_ln.gain", final_ln_gain_);
  params_.add("final_ln.bias", final_ln_bias_);
  params_.add("out_proj", out_proj_);
}

Transformer Transformer::clone() const {
  Transformer copy;
  copy.config_ = config_;
  copy.tok_embed_ = tok_embed_.detach();
  copy.pos_embed_ = pos_embed_.detach();
  copy.layers_.resize(layers_.size());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& s = layers_[i];
    auto& t = copy.layers_[i];
    t.ln1_gain = s.ln1_gain.detach();
    t.ln1_bias = s.ln1_bias.detach();
    t.wq = s.wq.detach();
    t.wk = s.wk.detach();
    t.wv = s.wv.detach();
    t.wo = s.wo.detach();
    t.ln2_gain = s.ln2_gain.detach();
    t.ln2_bias = s.ln2_bias.detach();
    t.ffn_w1 = s.ffn_w1.detach();
    t.ffn_b1 = s.ffn_b1.detach();
    t.ffn_w2 = s.ffn_w2.detach();
    t.ffn_b2 = s.ffn_b2.detach();
  }
  copy.final_ln_gain_ = final_ln_gain_.detach();
  copy.final_ln_bias_ = final_ln_bias_.detach();
  copy.out_proj_ = out_proj_.detach();
  copy.register_params();
  copy.set_frozen(frozen_);
  return copy;
}

void Transformer::set_frozen(bool frozen) {
  frozen_ = frozen;
  for (auto& e : params_.entries()) {
    Tensor t = e.tensor;
    t.set_requires_grad(!frozen);
  }
}

Tensor Transformer::embed(std::span<const int> tokens) const {
  if (tokens.empty()) {
    throw std::invalid_argument("embed: empty token sequence rejected");
  }
  if (tokens.size() > config_.max_seq_len) {
    throw std::invalid_argument("embed: sequence of length " +
                                std::to_string(tokens.size()) +
                                " exceeds max_seq_len " +
                                std::to_string(config_.max_seq_len));
  }
  std::vector<int> positions(tokens.size());
  for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = static_cast<int>(i);
  return add(embedding(tok_embed_, tokens), embedding(pos_embed_, positions));
}

Tensor Transformer::apply_layer(std::size_t index, const Tensor& x,
                                const Tensor* memory,
                                const XAttnLayerParams* xattn) const {
  const auto& l = layers_.at(index);
  const Tensor normed1 = add(mul(layer_norm(x), l.ln1_gain), l.ln1_bias);
  Tensor h = add(x, multi_head_attention(normed1, normed1, l.wq, l.wk, l.wv,
                                         l.wo, config_.num_heads));
  if (memory != nullptr && xattn != nullptr) {
    h = xattn_sublayer(h, *memory, *xattn, config_.num_heads);
  }
  const Tensor normed2 = add(mul(layer_norm(h), l.ln2_gain), l.ln2_bias);
  return add(h, feed_forward(normed2, l.ffn_w1, l.ffn_b1, l.ffn_w2, l.ffn_b2));
}

Tensor Transformer::project_out(const Tensor& x) const {
  return matmul(add(mul(layer_norm(x), final_ln_gain_), final_ln_bias_), out_proj_);
}

Tensor Transformer::forward_logits(std::span<const int> tokens) const {
  Tensor x = embed(tokens);
  for (std::size_t i = 0; i < layers_.size(); ++i) x = apply_layer(i, x);
  return project_out(x);
}

ScoutModel::ScoutModel(ModelConfig config, PartitionCase partition_case,
                       MechanismKind mechanism, std::uint64_t seed)
    : backbone_(config, seed),
      case_(partition_case),
      partition_(partition_model(config, partition_case)),
      mechanism_(mechanism) {
  Rng rng = Rng::stream(seed, "init/retro");
  retro_ = make_integration_params(mechanism, config.model_dim,
                                   partition_.recursive_layers(), rng);
  register_all_params();
}

ScoutModel::ScoutModel(const Transformer& backbone, PartitionCase partition_case,
                       MechanismKind mechanism, std::uint64_t seed)
    : backbone_(backbone.clone()),
      case_(partition_case),
      partition_(partition_model(backbone.config(), partition_case)),
      mechanism_(mechanism) {
  backbone_.set_frozen(false);
  Rng rng = Rng::stream(seed, "init/retro");
  retro_ = make_integration_params(mechanism, config().model_dim,
                                   partition_.recursive_layers(), rng);
  register_all_params();
}

void ScoutModel::register_all_params() {
  params_ = ParameterStore();
  for (const auto& e : backbone_.params().entries()) {
    params_.add(e.name, e.tensor, /*is_new=*/false);
  }
  auto reg = [this](const std::string& name, const Tensor& t) {
    if (t.defined()) params_.add("retro." + name, t, /*is_new=*/true);
  };
  reg("cat.w1", retro_.cat_w1);
  reg("cat.b1", retro_.cat_b1);
  reg("cat.w2", retro_.cat_w2);
  reg("cat.b2", retro_.cat_b2);
  reg("gate.w", retro_.gate_w);
  reg("gate.b", retro_.gate_b);
  reg("mod.scale_w", retro_.mod_scale_w);
  reg("mod.scale_b", retro_.mod_scale_b);
  reg("mod.shift_w", retro_.mod_shift_w);
  reg("mod.shift_b", retro_.mod_shift_b);
  for (std::size_t i = 0; i < retro_.xattn.size(); ++i) {
    const std::string prefix = "xattn." + std::to_string(i) + ".";
    auto& xp = retro_.xattn[i];
    reg(prefix + "ln.gain", xp.ln_gain);
    reg(prefix + "ln.bias", xp.ln_bias);
    reg(prefix + "mem.w1", xp.mem_w1);
    reg(prefix + "mem.b1", xp.mem_b1);
    reg(prefix + "mem.w2", xp.mem_w2);
    reg(prefix + "mem.b2", xp.mem_b2);
    reg(prefix + "wq", xp.wq);
    reg(prefix + "wk", xp.wk);
    reg(prefix + "wv", xp.wv);
    reg(prefix + "wo", xp.wo);
  }
}

LatentState ScoutModel::encode_head(std::span<const int> tokens) const {
  ++head_runs_;
  Tensor x = backbone_.embed(tokens);
  for (std::size_t i = 0; i < partition_.head_end; ++i) {
    x = backbone_.apply_layer(i, x);
  }
  return LatentState{x, 0};
}

LatentState ScoutModel::recursive_step(
    const LatentState& z0, const std::optional<LatentState>& z_prev) const {
  if (z0.iteration_index != 0) {
    throw std::invalid_argument("recursive_step: z0 must have iteration_index 0");
  }
  if (z_prev && z_prev->values.shape() != z0.values.shape()) {
    throw std::invalid_argument("recursive_step: sequence length mismatch " +
                                shape_to_string(z0.values.shape()) + " vs " +
                                shape_to_string(z_prev->values.shape()));
  }

  Tensor x = z0.values;
  const Tensor* memory = nullptr;
  if (z_prev) {
    if (mechanism_ == MechanismKind::XAttn) {
      memory = &z_prev->values;  // fused per layer below
    } else {
      x = integrate(mechanism_, z0.values, z_prev->values, retro_);
    }
  }
  for (std::size_t i = partition_.head_end; i < partition_.rec_end; ++i) {
    const XAttnLayerParams* xp =
        memory ? &retro_.xattn.at(i - partition_.head_end) : nullptr;
    x = backbone_.apply_layer(i, x, memory, xp);
  }
  const std::size_t t = z_prev ? z_prev->iteration_index + 1 : 1;
  return LatentState{x, t};
}

Tensor ScoutModel::decode_tail(const LatentState& z) const {
  Tensor x = z.values;
  for (std::size_t i = partition_.rec_end; i < partition_.num_layers; ++i) {
    x = backbone_.apply_layer(i, x);
  }
  return backbone_.project_out(x);
}

StepOutputs ScoutModel::forward_flow(std::span<const int> tokens) const {
  const std::size_t iterations = config().num_iterations;
  StepOutputs out;
  out.per_step_logits.reserve(iterations);
  out.per_step_states.reserve(iterations);

  const LatentState z0 = encode_head(tokens);
  std::optional<LatentState> prev;
  for (std::size_t t = 1; t <= iterations; ++t) {
    LatentState z = recursive_step(z0, prev);
    out.per_step_logits.push_back(decode_tail(z));
    prev = z;
    out.per_step_states.push_back(std::move(z));
  }
  return out;
}

}  // namespace scout
