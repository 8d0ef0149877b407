#pragma once
// Differentiable tensor ops. Each op validates shapes up front, computes its
// value eagerly, and attaches a backprop closure only when some input
// requires a gradient.

#include <span>

#include "scout/tensor.hpp"

namespace scout {

// --- linear algebra ---------------------------------------------------------
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// --- elementwise -------------------------------------------------------------
// add/sub/mul accept equal shapes, or 2-D lhs with 1-D rhs broadcast across rows.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor gelu(const Tensor& a);     // tanh approximation, smooth everywhere
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);

// --- normalization / attention ----------------------------------------------
// Per-row standardization (x - mean) / sqrt(var + eps); no affine part.
Tensor layer_norm(const Tensor& x, double eps = 1e-5);
// Row-wise softmax over the trailing axis.
Tensor softmax_rows(const Tensor& logits);
// Row-wise softmax where row i is taken over columns 0..i only; columns past
// the diagonal are exactly zero. Input must be square (scores of causal
// attention), so position i never sees keys at positions > i.
Tensor causal_masked_softmax(const Tensor& scores);

// Multi-head causal attention. Queries come from q_src, keys/values from
// kv_src (pass q_src twice for self-attention). The same causal mask applies
// either way: position i attends to kv positions 0..i.
Tensor multi_head_attention(const Tensor& q_src, const Tensor& kv_src,
                            const Tensor& wq, const Tensor& wk, const Tensor& wv,
                            const Tensor& wo, std::size_t num_heads);

// Position-wise feed-forward: gelu(x·w1 + b1)·w2 + b2.
Tensor feed_forward(const Tensor& x, const Tensor& w1, const Tensor& b1,
                    const Tensor& w2, const Tensor& b2);

// --- shape surgery ------------------------------------------------------------
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);
Tensor reshape(const Tensor& a, Shape shape);

// --- lookup / reduction --------------------------------------------------------
// Rows of `table` (vocab x dim) selected by token id; backward scatter-adds.
Tensor embedding(const Tensor& table, std::span<const int> ids);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// Raw kernels, exposed for reuse and benchmarks. c = a·b (+= when accumulate).
namespace kernels {
void matmul_nn(const double* a, const double* b, double* c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate);
// c[m,k] (+)= a[m,n] · b[k,n]^T
void matmul_nt(const double* a, const double* b, double* c, std::size_t m,
               std::size_t n, std::size_t k, bool accumulate);
// c[k,n] (+)= a[m,k]^T · b[m,n]
void matmul_tn(const double* a, const double* b, double* c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate);
}  // namespace kernels

}  // namespace scout
