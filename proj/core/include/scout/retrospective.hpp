#pragma once
// History integration: the six mechanisms that merge the initial latent state
// z0 with the previous iteration's state z_prev before (or inside) the
// recursive block.
//
// Five mechanisms are stream-merging and run once before the block:
//   Init     H(z0, zp) = zp
//   Add      H(z0, zp) = z0 + zp
//   CatProj  H(z0, zp) = two-layer MLP of [z0 ; zp]
//   Gate     H(z0, zp) = g⊙zp + (1−g)⊙z0,  g = sigmoid([z0 ; zp]·Wg + bg)
//   ModInj   H(z0, zp) = s⊙LN(z0) + b,     [s, b] affine in zp per position
// XAttn instead adds a causal cross-attention sub-layer after self-attention
// in every recursive layer: queries from the current stream, keys/values from
// a two-layer MLP projection of z_prev, output added residually. Its output
// projection starts at zero so an untouched model reproduces the backbone
// exactly.
//
// Added parameter counts (model_dim d, R recursive layers):
//   Init 0, Add 0, CatProj 3d²+2d, Gate 2d²+d, ModInj 2d²+2d,
//   XAttn R·(6d²+4d).

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "scout/tensor.hpp"

namespace scout {

enum class MechanismKind { Init, Add, CatProj, Gate, ModInj, XAttn };

inline constexpr MechanismKind kAllMechanisms[] = {
    MechanismKind::Init,   MechanismKind::Add,    MechanismKind::CatProj,
    MechanismKind::Gate,   MechanismKind::ModInj, MechanismKind::XAttn};

// Names follow the run-configuration labels: init, add, catproj, gate,
// modinj, xattn. Unknown names are rejected.
MechanismKind mechanism_from_name(std::string_view name);
std::string mechanism_name(MechanismKind kind);

struct XAttnLayerParams {
  Tensor ln_gain, ln_bias;              // pre-sublayer norm of the stream
  Tensor mem_w1, mem_b1, mem_w2, mem_b2;  // memory projection MLP
  Tensor wq, wk, wv, wo;                // wo zero-initialized
};

// Learnable tensors of one mechanism; empty for Init/Add. All tensors are
// tagged "new" in the owning model's parameter store so the optimizer can
// give them the higher learning rate.
struct IntegrationParams {
  MechanismKind kind = MechanismKind::Init;
  // CatProj
  Tensor cat_w1, cat_b1, cat_w2, cat_b2;
  // Gate
  Tensor gate_w, gate_b;
  // ModInj
  Tensor mod_scale_w, mod_scale_b, mod_shift_w, mod_shift_b;
  // XAttn, one entry per recursive layer
  std::vector<XAttnLayerParams> xattn;
};

// Builds fresh mechanism parameters. `num_recursive_layers` sizes the XAttn
// sub-layer list; other mechanisms ignore it.
IntegrationParams make_integration_params(MechanismKind kind, std::size_t model_dim,
                                          std::size_t num_recursive_layers, Rng& rng);

// Closed-form added-parameter count for the table above.
std::size_t integration_param_count(MechanismKind kind, std::size_t model_dim,
                                    std::size_t num_recursive_layers);

// Stream-merging integration (every mechanism except XAttn, which fuses
// inside the recursive layers; passing XAttn here is an error).
Tensor integrate(MechanismKind kind, const Tensor& z0, const Tensor& z_prev,
                 const IntegrationParams& params);

// The XAttn sub-layer: causal cross-attention of the current stream over the
// projected memory, added residually.
Tensor xattn_sublayer(const Tensor& current, const Tensor& memory,
                      const XAttnLayerParams& params, std::size_t num_heads);

}  // namespace scout
