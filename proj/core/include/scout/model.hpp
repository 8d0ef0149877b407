#pragma once
// The decoder transformer and its partitioned, recursive variant.
//
// Transformer is the plain stack (embedding, pre-LN layers, final norm,
// output projection): the pretraining target, and the teacher architecture.
// ScoutModel wraps the same stack with a head/recursive/tail partition and a
// retrospective mechanism, and runs the T-step recursive forward pass:
//   z0 = head(x);  z1 = rec(z0);  zt = rec(H(z0, z_{t-1}))  for t ≥ 2,
// decoding every zt through the shared tail.

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "scout/config.hpp"
#include "scout/retrospective.hpp"
#include "scout/tensor.hpp"

namespace scout {

struct ParamEntry {
  std::string name;
  Tensor tensor;
  bool is_new = false;  // true → retrospective parameter, higher LR group
};

// Ordered, named parameter registry. Insertion order is the serialization
// order, so checkpoints are byte-stable.
class ParameterStore {
 public:
  Tensor add(std::string name, Tensor t, bool is_new = false);
  const std::vector<ParamEntry>& entries() const { return entries_; }
  Tensor find(std::string_view name) const;  // throws if absent
  std::vector<Tensor> tensors() const;
  std::size_t scalar_count(bool new_only = false) const;

 private:
  std::vector<ParamEntry> entries_;
};

struct LayerParams {
  Tensor ln1_gain, ln1_bias;
  Tensor wq, wk, wv, wo;
  Tensor ln2_gain, ln2_bias;
  Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;
};

class Transformer {
 public:
  // Fresh initialization from the "init/backbone" stream of `seed`, so two
  // models built from the same seed share identical backbone weights no
  // matter what else draws randomness.
  Transformer(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

  // Deep copy: fresh parameter nodes with identical values.
  Transformer clone() const;

  // Freezing stops gradient tracking through every parameter.
  void set_frozen(bool frozen);
  bool frozen() const { return frozen_; }

  // Token+position embedding. Rejects empty input, out-of-vocab tokens and
  // sequences beyond max_seq_len.
  Tensor embed(std::span<const int> tokens) const;
  // One pre-LN decoder layer; `memory` enables the cross-attention sub-layer
  // used by the recursive block under XAttn.
  Tensor apply_layer(std::size_t index, const Tensor& x,
                     const Tensor* memory = nullptr,
                     const XAttnLayerParams* xattn = nullptr) const;
  // Final norm + output projection.
  Tensor project_out(const Tensor& x) const;
  // Full single-pass forward: logits of shape (len × vocab).
  Tensor forward_logits(std::span<const int> tokens) const;

 private:
  Transformer() = default;
  ModelConfig config_;
  Tensor tok_embed_, pos_embed_;
  std::vector<LayerParams> layers_;
  Tensor final_ln_gain_, final_ln_bias_, out_proj_;
  ParameterStore params_;
  bool frozen_ = false;

  void register_params();
};

// The per-iteration latent state z^(t).
struct LatentState {
  Tensor values;                    // (len × model_dim)
  std::size_t iteration_index = 0;  // 0 for z0, t after iteration t
};

struct StepOutputs {
  std::vector<Tensor> per_step_logits;     // T entries, (len × vocab)
  std::vector<LatentState> per_step_states;  // T entries
};

class ScoutModel {
 public:
  // Fresh model: backbone from "init/backbone", mechanism from "init/retro".
  ScoutModel(ModelConfig config, PartitionCase partition_case,
             MechanismKind mechanism, std::uint64_t seed);
  // Fine-tuning start: backbone weights copied bitwise from a pretrained
  // stack, mechanism parameters fresh from "init/retro" of `seed`.
  ScoutModel(const Transformer& backbone, PartitionCase partition_case,
             MechanismKind mechanism, std::uint64_t seed);

  const ModelConfig& config() const { return backbone_.config(); }
  const PartitionSpec& partition() const { return partition_; }
  PartitionCase partition_case() const { return case_; }
  MechanismKind mechanism() const { return mechanism_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }
  const Transformer& backbone() const { return backbone_; }
  const IntegrationParams& integration() const { return retro_; }

  // z0 = embedding + head layers, run exactly once per forward pass.
  LatentState encode_head(std::span<const int> tokens) const;
  // One application of the recursive block. Absent z_prev is the first
  // iteration (no history integration); otherwise the mechanism merges z0
  // and z_prev, or feeds z_prev as cross-attention memory under XAttn.
  LatentState recursive_step(const LatentState& z0,
                             const std::optional<LatentState>& z_prev) const;
  // Tail layers (if any) + final norm + shared output projection.
  Tensor decode_tail(const LatentState& z) const;
  // T iterations, decoding every intermediate state.
  StepOutputs forward_flow(std::span<const int> tokens) const;

  // Test hook: number of encode_head executions since construction.
  std::size_t head_run_count() const { return head_runs_; }

 private:
  Transformer backbone_;
  PartitionCase case_;
  PartitionSpec partition_;
  MechanismKind mechanism_;
  IntegrationParams retro_;
  ParameterStore params_;
  mutable std::size_t head_runs_ = 0;

  void register_all_params();
};

}  // namespace scout
