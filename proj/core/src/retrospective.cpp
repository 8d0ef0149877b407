#include "scout/retrospective.hpp"

#include <stdexcept>

#include "scout/ops.hpp"

namespace scout {

MechanismKind mechanism_from_name(std::string_view name) {
  if (name == "init") return MechanismKind::Init;
  if (name == "add") return MechanismKind::Add;
  if (name == "catproj") return MechanismKind::CatProj;
  if (name == "gate") return MechanismKind::Gate;
  if (name == "modinj") return MechanismKind::ModInj;
  if (name == "xattn") return MechanismKind::XAttn;
  throw std::invalid_argument(
      "unknown mechanism '" + std::string(name) +
      "' (expected one of: init, add, catproj, gate, modinj, xattn)");
}

std::string mechanism_name(MechanismKind kind) {
  switch (kind) {
    case MechanismKind::Init: return "init";
    case MechanismKind::Add: return "add";
    case MechanismKind::CatProj: return "catproj";
    case MechanismKind::Gate: return "gate";
    case MechanismKind::ModInj: return "modinj";
    case MechanismKind::XAttn: return "xattn";
  }
  throw std::invalid_argument("mechanism_name: invalid kind");
}

IntegrationParams make_integration_params(MechanismKind kind, std::size_t dim,
                                          std::size_t num_recursive_layers,
                                          Rng& rng) {
  constexpr double kStd = 0.02;
  IntegrationParams p;
  p.kind = kind;
  switch (kind) {
    case MechanismKind::Init:
    case MechanismKind::Add:
      break;
    case MechanismKind::CatProj:
      p.cat_w1 = Tensor::randn({2 * dim, dim}, rng, kStd);
      p.cat_b1 = Tensor::zeros({dim});
      p.cat_w2 = Tensor::randn({dim, dim}, rng, kStd);
      p.cat_b2 = Tensor::zeros({dim});
      break;
    case MechanismKind::Gate:
      p.gate_w = Tensor::randn({2 * dim, dim}, rng, kStd);
      p.gate_b = Tensor::zeros({dim});
      break;
    case MechanismKind::ModInj:
      // Scale bias starts at one so the initial map is close to LN(z0).
      p.mod_scale_w = Tensor::randn({dim, dim}, rng, kStd);
      p.mod_scale_b = Tensor::full({dim}, 1.0);
      p.mod_shift_w = Tensor::randn({dim, dim}, rng, kStd);
      p.mod_shift_b = Tensor::zeros({dim});
      break;
    case MechanismKind::XAttn:
      for (std::size_t i = 0; i < num_recursive_layers; ++i) {
        XAttnLayerParams xp;
        xp.ln_gain = Tensor::full({dim}, 1.0);
        xp.ln_bias = Tensor::zeros({dim});
        xp.mem_w1 = Tensor::randn({dim, dim}, rng, kStd);
        xp.mem_b1 = Tensor::zeros({dim});
        xp.mem_w2 = Tensor::randn({dim, dim}, rng, kStd);
        xp.mem_b2 = Tensor::zeros({dim});
        xp.wq = Tensor::randn({dim, dim}, rng, kStd);
        xp.wk = Tensor::randn({dim, dim}, rng, kStd);
        xp.wv = Tensor::randn({dim, dim}, rng, kStd);
        // Zero output projection: the sub-layer is an exact no-op until
        // training moves it, so fine-tuning starts at the backbone function.
        xp.wo = Tensor::zeros({dim, dim});
        p.xattn.push_back(std::move(xp));
      }
      break;
  }
  return p;
}

std::size_t integration_param_count(MechanismKind kind, std::size_t d,
                                    std::size_t num_recursive_layers) {
  switch (kind) {
    case MechanismKind::Init:
    case MechanismKind::Add:
      return 0;
    case MechanismKind::CatProj: return 3 * d * d + 2 * d;
    case MechanismKind::Gate: return 2 * d * d + d;
    case MechanismKind::ModInj: return 2 * d * d + 2 * d;
    case MechanismKind::XAttn: return num_recursive_layers * (6 * d * d + 4 * d);
  }
  throw std::invalid_argument("integration_param_count: invalid kind");
}

Tensor integrate(MechanismKind kind, const Tensor& z0, const Tensor& z_prev,
                 const IntegrationParams& params) {
  if (!z0.defined() || !z_prev.defined()) {
    throw std::invalid_argument("integrate: undefined state");
  }
  if (z0.shape() != z_prev.shape()) {
    throw std::invalid_argument("integrate: state length mismatch " +
                                shape_to_string(z0.shape()) + " vs " +
                                shape_to_string(z_prev.shape()));
  }
  switch (kind) {
    case MechanismKind::Init:
      return z_prev;
    case MechanismKind::Add:
      return add(z0, z_prev);
    case MechanismKind::CatProj: {
      const Tensor cat = concat_cols(z0, z_prev);
      const Tensor hidden = gelu(add(matmul(cat, params.cat_w1), params.cat_b1));
      return add(matmul(hidden, params.cat_w2), params.cat_b2);
    }
    case MechanismKind::Gate: {
      const Tensor cat = concat_cols(z0, z_prev);
      const Tensor g = sigmoid(add(matmul(cat, params.gate_w), params.gate_b));
      const Tensor one_minus_g = sub(Tensor::full(g.shape(), 1.0), g);
      return add(mul(g, z_prev), mul(one_minus_g, z0));
    }
    case MechanismKind::ModInj: {
      const Tensor normed = layer_norm(z0);
      const Tensor s = add(matmul(z_prev, params.mod_scale_w), params.mod_scale_b);
      const Tensor b = add(matmul(z_prev, params.mod_shift_w), params.mod_shift_b);
      return add(mul(s, normed), b);
    }
    case MechanismKind::XAttn:
      throw std::invalid_argument(
          "integrate: xattn fuses inside the recursive layers, not as a "
          "stream merge");
  }
  throw std::invalid_argument("integrate: invalid kind");
}

Tensor xattn_sublayer(const Tensor& current, const Tensor& memory,
                      const XAttnLayerParams& params, std::size_t num_heads) {
  if (current.rows() != memory.rows()) {
    throw std::invalid_argument("xattn_sublayer: stream length " +
                                std::to_string(current.rows()) +
                                " != memory length " + std::to_string(memory.rows()));
  }
  const Tensor normed =
      add(mul(layer_norm(current), params.ln_gain), params.ln_bias);
  const Tensor mem_hidden =
      gelu(add(matmul(memory, params.mem_w1), params.mem_b1));
  const Tensor mem_proj = add(matmul(mem_hidden, params.mem_w2), params.mem_b2);
  const Tensor attended = multi_head_attention(normed, mem_proj, params.wq,
                                               params.wk, params.wv, params.wo,
                                               num_heads);
  return add(current, attended);
}

}  // namespace scout
