#include "scout/ops.hpp"

#include <cmath>
#include <numbers>

namespace scout {

namespace {

using detail::Node;

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) {
    throw std::invalid_argument(std::string(op) + ": undefined tensor");
  }
}

// Builds the result node; links parents and backprop only when needed.
Tensor make_op(Shape shape, std::vector<double> value,
               std::initializer_list<Tensor> parents,
               std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  bool needs_grad = false;
  for (const Tensor& p : parents) needs_grad = needs_grad || p.requires_grad();
  if (needs_grad) {
    n->requires_grad = true;
    for (const Tensor& p : parents) n->parents.push_back(p.node_ptr());
    n->backprop = std::move(backprop);
  }
  return Tensor::wrap(std::move(n));
}

bool row_broadcast_ok(const Tensor& a, const Tensor& b) {
  return a.rank() == 2 && b.rank() == 1 && a.shape()[1] == b.shape()[0];
}

void check_elementwise(const Tensor& a, const Tensor& b, const char* op) {
  require_defined(a, op);
  require_defined(b, op);
  if (a.shape() == b.shape() || row_broadcast_ok(a, b)) return;
  throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                              shape_to_string(a.shape()) + " vs " +
                              shape_to_string(b.shape()));
}

}  // namespace

namespace kernels {

void matmul_nn(const double* a, const double* b, double* c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t t = 0; t < k; ++t) {
      const double av = arow[t];
      if (av == 0.0) continue;
      const double* brow = b + t * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul_nt(const double* a, const double* b, double* c, std::size_t m,
               std::size_t n, std::size_t k, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * n;
    double* crow = c + i * k;
    for (std::size_t j = 0; j < k; ++j) {
      const double* brow = b + j * n;
      double s = 0.0;
      for (std::size_t t = 0; t < n; ++t) s += arow[t] * brow[t];
      if (accumulate) {
        crow[j] += s;
      } else {
        crow[j] = s;
      }
    }
  }
}

void matmul_tn(const double* a, const double* b, double* c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate) {
  if (!accumulate) std::fill(c, c + k * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* brow = b + i * n;
    for (std::size_t t = 0; t < k; ++t) {
      const double av = arow[t];
      if (av == 0.0) continue;
      double* crow = c + t * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace kernels

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
    throw std::invalid_argument("matmul: shape mismatch " +
                                shape_to_string(a.shape()) + " x " +
                                shape_to_string(b.shape()));
  }
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<double> out(m * n);
  kernels::matmul_nn(a.data().data(), b.data().data(), out.data(), m, k, n, false);

  Node* an = a.node();
  Node* bn = b.node();
  return make_op({m, n}, std::move(out), {a, b}, [an, bn, m, k, n](Node& self) {
    const double* g = self.grad.data();
    if (an->requires_grad) {
      kernels::matmul_nt(g, bn->value.data(), an->grad_data(), m, n, k, true);
    }
    if (bn->requires_grad) {
      kernels::matmul_tn(an->value.data(), g, bn->grad_data(), m, k, n, true);
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_defined(a, "transpose");
  if (a.rank() != 2) {
    throw std::invalid_argument("transpose: rank-2 required, got " +
                                shape_to_string(a.shape()));
  }
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  const double* src = a.data().data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = src[i * n + j];

  Node* an = a.node();
  return make_op({n, m}, std::move(out), {a}, [an, m, n](Node& self) {
    double* ag = an->grad_data();
    const double* g = self.grad.data();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ag[i * n + j] += g[j * m + i];
  });
}

namespace {

enum class BinKind { Add, Sub, Mul };

Tensor binary_op(const Tensor& a, const Tensor& b, BinKind kind, const char* name) {
  check_elementwise(a, b, name);
  const bool broadcast = row_broadcast_ok(a, b);
  const std::size_t n = a.size();
  const std::size_t cols = broadcast ? b.size() : 0;
  std::vector<double> out(n);
  const double* av = a.data().data();
  const double* bv = b.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    const double bi = broadcast ? bv[i % cols] : bv[i];
    switch (kind) {
      case BinKind::Add: out[i] = av[i] + bi; break;
      case BinKind::Sub: out[i] = av[i] - bi; break;
      case BinKind::Mul: out[i] = av[i] * bi; break;
    }
  }

  Node* an = a.node();
  Node* bn = b.node();
  return make_op(a.shape(), std::move(out), {a, b},
                 [an, bn, kind, broadcast, cols](Node& self) {
                   const double* g = self.grad.data();
                   const std::size_t n = self.size();
                   if (an->requires_grad) {
                     double* ag = an->grad_data();
                     if (kind == BinKind::Mul) {
                       for (std::size_t i = 0; i < n; ++i) {
                         const double bi = broadcast ? bn->value[i % cols] : bn->value[i];
                         ag[i] += g[i] * bi;
                       }
                     } else {
                       for (std::size_t i = 0; i < n; ++i) ag[i] += g[i];
                     }
                   }
                   if (bn->requires_grad) {
                     double* bg = bn->grad_data();
                     const double sign = kind == BinKind::Sub ? -1.0 : 1.0;
                     for (std::size_t i = 0; i < n; ++i) {
                       const std::size_t bi = broadcast ? i % cols : i;
                       if (kind == BinKind::Mul) {
                         bg[bi] += g[i] * an->value[i];
                       } else {
                         bg[bi] += sign * g[i];
                       }
                     }
                   }
                 });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::Add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::Sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::Mul, "mul"); }

Tensor scale(const Tensor& a, double c) {
  require_defined(a, "scale");
  std::vector<double> out(a.size());
  const double* av = a.data().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * c;
  Node* an = a.node();
  return make_op(a.shape(), std::move(out), {a}, [an, c](Node& self) {
    if (!an->requires_grad) return;
    double* ag = an->grad_data();
    const double* g = self.grad.data();
    for (std::size_t i = 0; i < self.size(); ++i) ag[i] += c * g[i];
  });
}

Tensor gelu(const Tensor& a) {
  require_defined(a, "gelu");
  const std::size_t n = a.size();
  std::vector<double> out(n);
  const double* x = a.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    const double u = kGeluC * (x[i] + kGeluA * x[i] * x[i] * x[i]);
    out[i] = 0.5 * x[i] * (1.0 + std::tanh(u));
  }
  Node* an = a.node();
  return make_op(a.shape(), std::move(out), {a}, [an](Node& self) {
    if (!an->requires_grad) return;
    double* ag = an->grad_data();
    const double* g = self.grad.data();
    for (std::size_t i = 0; i < self.size(); ++i) {
      const double xi = an->value[i];
      const double u = kGeluC * (xi + kGeluA * xi * xi * xi);
      const double th = std::tanh(u);
      const double du = kGeluC * (1.0 + 3.0 * kGeluA * xi * xi);
      const double d = 0.5 * (1.0 + th) + 0.5 * xi * (1.0 - th * th) * du;
      ag[i] += g[i] * d;
    }
  });
}

Tensor sigmoid(const Tensor& a) {
  require_defined(a, "sigmoid");
  const std::size_t n = a.size();
  std::vector<double> out(n);
  const double* x = a.data().data();
  for (std::size_t i = 0; i < n; ++i) out[i] = 1.0 / (1.0 + std::exp(-x[i]));
  Node* an = a.node();
  return make_op(a.shape(), std::move(out), {a}, [an](Node& self) {
    if (!an->requires_grad) return;
    double* ag = an->grad_data();
    const double* g = self.grad.data();
    for (std::size_t i = 0; i < self.size(); ++i) {
      const double s = self.value[i];
      ag[i] += g[i] * s * (1.0 - s);
    }
  });
}

Tensor relu(const Tensor& a) {
  require_defined(a, "relu");
  const std::size_t n = a.size();
  std::vector<double> out(n);
  const double* x = a.data().data();
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  Node* an = a.node();
  return make_op(a.shape(), std::move(out), {a}, [an](Node& self) {
    if (!an->requires_grad) return;
    double* ag = an->grad_data();
    const double* g = self.grad.data();
    for (std::size_t i = 0; i < self.size(); ++i) {
      if (an->value[i] > 0.0) ag[i] += g[i];
    }
  });
}

Tensor layer_norm(const Tensor& x, double eps) {
  require_defined(x, "layer_norm");
  if (x.rank() != 2) {
    throw std::invalid_argument("layer_norm: rank-2 required, got " +
                                shape_to_string(x.shape()));
  }
  const std::size_t rows = x.rows(), cols = x.cols();
  std::vector<double> out(rows * cols);
  std::vector<double> inv_std(rows);
  const double* xv = x.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv + r * cols;
    double mu = 0.0;
    for (std::size_t j = 0; j < cols; ++j) mu += row[j];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      const double d = row[j] - mu;
      var += d * d;
    }
    var /= static_cast<double>(cols);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < cols; ++j) out[r * cols + j] = (row[j] - mu) * is;
  }
  Node* xn = x.node();
  return make_op(x.shape(), std::move(out), {x},
                 [xn, rows, cols, inv_std = std::move(inv_std)](Node& self) {
                   if (!xn->requires_grad) return;
                   double* xg = xn->grad_data();
                   const double* g = self.grad.data();
                   const double* y = self.value.data();
                   const double inv_n = 1.0 / static_cast<double>(cols);
                   for (std::size_t r = 0; r < rows; ++r) {
                     const double* gr = g + r * cols;
                     const double* yr = y + r * cols;
                     double g_mean = 0.0, gy_mean = 0.0;
                     for (std::size_t j = 0; j < cols; ++j) {
                       g_mean += gr[j];
                       gy_mean += gr[j] * yr[j];
                     }
                     g_mean *= inv_n;
                     gy_mean *= inv_n;
                     const double is = inv_std[r];
                     for (std::size_t j = 0; j < cols; ++j) {
                       xg[r * cols + j] += is * (gr[j] - g_mean - yr[j] * gy_mean);
                     }
                   }
                 });
}

namespace {

// Shared softmax-row forward; `limit(r)` gives the exclusive column bound.
template <typename Limit>
void softmax_forward(const double* x, double* out, std::size_t rows,
                     std::size_t cols, Limit limit) {
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t lim = limit(r);
    const double* row = x + r * cols;
    double* orow = out + r * cols;
    double mx = row[0];
    for (std::size_t j = 1; j < lim; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < lim; ++j) {
      orow[j] = std::exp(row[j] - mx);
      z += orow[j];
    }
    const double inv = 1.0 / z;
    for (std::size_t j = 0; j < lim; ++j) orow[j] *= inv;
    for (std::size_t j = lim; j < cols; ++j) orow[j] = 0.0;
  }
}

template <typename Limit>
void softmax_backward(const double* g, const double* p, double* xg,
                      std::size_t rows, std::size_t cols, Limit limit) {
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t lim = limit(r);
    const double* gr = g + r * cols;
    const double* pr = p + r * cols;
    double dot = 0.0;
    for (std::size_t j = 0; j < lim; ++j) dot += gr[j] * pr[j];
    for (std::size_t j = 0; j < lim; ++j) {
      xg[r * cols + j] += pr[j] * (gr[j] - dot);
    }
  }
}

}  // namespace

Tensor softmax_rows(const Tensor& logits) {
  require_defined(logits, "softmax_rows");
  if (logits.rank() != 2) {
    throw std::invalid_argument("softmax_rows: rank-2 required, got " +
                                shape_to_string(logits.shape()));
  }
  if (!logits.all_finite()) {
    throw std::invalid_argument("softmax_rows: non-finite input rejected");
  }
  const std::size_t rows = logits.rows(), cols = logits.cols();
  std::vector<double> out(rows * cols);
  softmax_forward(logits.data().data(), out.data(), rows, cols,
                  [cols](std::size_t) { return cols; });
  Node* xn = logits.node();
  return make_op(logits.shape(), std::move(out), {logits},
                 [xn, rows, cols](Node& self) {
                   if (!xn->requires_grad) return;
                   softmax_backward(self.grad.data(), self.value.data(),
                                    xn->grad_data(), rows, cols,
                                    [cols](std::size_t) { return cols; });
                 });
}

Tensor causal_masked_softmax(const Tensor& scores) {
  require_defined(scores, "causal_masked_softmax");
  if (scores.rank() != 2 || scores.rows() != scores.cols()) {
    throw std::invalid_argument("causal_masked_softmax: square matrix required, got " +
                                shape_to_string(scores.shape()));
  }
  const std::size_t n = scores.rows();
  std::vector<double> out(n * n);
  softmax_forward(scores.data().data(), out.data(), n, n,
                  [](std::size_t r) { return r + 1; });
  Node* xn = scores.node();
  return make_op(scores.shape(), std::move(out), {scores}, [xn, n](Node& self) {
    if (!xn->requires_grad) return;
    softmax_backward(self.grad.data(), self.value.data(), xn->grad_data(), n, n,
                     [](std::size_t r) { return r + 1; });
  });
}

Tensor multi_head_attention(const Tensor& q_src, const Tensor& kv_src,
                            const Tensor& wq, const Tensor& wk, const Tensor& wv,
                            const Tensor& wo, std::size_t num_heads) {
  require_defined(q_src, "multi_head_attention");
  require_defined(kv_src, "multi_head_attention");
  const std::size_t dim = wq.cols();
  if (num_heads == 0 || dim % num_heads != 0) {
    throw std::invalid_argument("multi_head_attention: dim " + std::to_string(dim) +
                                " not divisible by " + std::to_string(num_heads) +
                                " heads");
  }
  if (q_src.rows() != kv_src.rows()) {
    throw std::invalid_argument("multi_head_attention: query length " +
                                std::to_string(q_src.rows()) +
                                " != memory length " + std::to_string(kv_src.rows()));
  }
  const std::size_t head_dim = dim / num_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));

  const Tensor q = matmul(q_src, wq);
  const Tensor k = matmul(kv_src, wk);
  const Tensor v = matmul(kv_src, wv);

  Tensor merged;
  for (std::size_t h = 0; h < num_heads; ++h) {
    const std::size_t c0 = h * head_dim, c1 = c0 + head_dim;
    const Tensor qh = slice_cols(q, c0, c1);
    const Tensor kh = slice_cols(k, c0, c1);
    const Tensor vh = slice_cols(v, c0, c1);
    const Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
    const Tensor weights = causal_masked_softmax(scores);
    const Tensor head_out = matmul(weights, vh);
    merged = h == 0 ? head_out : concat_cols(merged, head_out);
  }
  return matmul(merged, wo);
}

Tensor feed_forward(const Tensor& x, const Tensor& w1, const Tensor& b1,
                    const Tensor& w2, const Tensor& b2) {
  return add(matmul(gelu(add(matmul(x, w1), b1)), w2), b2);
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  require_defined(a, "concat_cols");
  require_defined(b, "concat_cols");
  if (a.rank() != 2 || b.rank() != 2 || a.rows() != b.rows()) {
    throw std::invalid_argument("concat_cols: row counts differ: " +
                                shape_to_string(a.shape()) + " vs " +
                                shape_to_string(b.shape()));
  }
  const std::size_t rows = a.rows(), ca = a.cols(), cb = b.cols();
  std::vector<double> out(rows * (ca + cb));
  const double* av = a.data().data();
  const double* bv = b.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy(av + r * ca, av + (r + 1) * ca, out.begin() + r * (ca + cb));
    std::copy(bv + r * cb, bv + (r + 1) * cb, out.begin() + r * (ca + cb) + ca);
  }
  Node* an = a.node();
  Node* bn = b.node();
  return make_op({rows, ca + cb}, std::move(out), {a, b},
                 [an, bn, rows, ca, cb](Node& self) {
                   const double* g = self.grad.data();
                   const std::size_t stride = ca + cb;
                   if (an->requires_grad) {
                     double* ag = an->grad_data();
                     for (std::size_t r = 0; r < rows; ++r)
                       for (std::size_t j = 0; j < ca; ++j)
                         ag[r * ca + j] += g[r * stride + j];
                   }
                   if (bn->requires_grad) {
                     double* bg = bn->grad_data();
                     for (std::size_t r = 0; r < rows; ++r)
                       for (std::size_t j = 0; j < cb; ++j)
                         bg[r * cb + j] += g[r * stride + ca + j];
                   }
                 });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  require_defined(a, "slice_cols");
  if (a.rank() != 2 || begin >= end || end > a.cols()) {
    throw std::invalid_argument("slice_cols: invalid range [" +
                                std::to_string(begin) + "," + std::to_string(end) +
                                ") for shape " + shape_to_string(a.shape()));
  }
  const std::size_t rows = a.rows(), cols = a.cols(), w = end - begin;
  std::vector<double> out(rows * w);
  const double* av = a.data().data();
  for (std::size_t r = 0; r < rows; ++r)
    std::copy(av + r * cols + begin, av + r * cols + end, out.begin() + r * w);
  Node* an = a.node();
  return make_op({rows, w}, std::move(out), {a},
                 [an, rows, cols, begin, w](Node& self) {
                   if (!an->requires_grad) return;
                   double* ag = an->grad_data();
                   const double* g = self.grad.data();
                   for (std::size_t r = 0; r < rows; ++r)
                     for (std::size_t j = 0; j < w; ++j)
                       ag[r * cols + begin + j] += g[r * w + j];
                 });
}

Tensor reshape(const Tensor& a, Shape shape) {
  require_defined(a, "reshape");
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  if (n != a.size()) {
    throw std::invalid_argument("reshape: cannot view " +
                                shape_to_string(a.shape()) + " as " +
                                shape_to_string(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  Node* an = a.node();
  return make_op(std::move(shape), std::move(out), {a}, [an](Node& self) {
    if (!an->requires_grad) return;
    double* ag = an->grad_data();
    const double* g = self.grad.data();
    for (std::size_t i = 0; i < self.size(); ++i) ag[i] += g[i];
  });
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
  require_defined(table, "embedding");
  if (table.rank() != 2) {
    throw std::invalid_argument("embedding: table must be rank-2");
  }
  const std::size_t vocab = table.rows(), dim = table.cols();
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw std::out_of_range("embedding: token id " + std::to_string(id) +
                              " outside vocabulary of size " + std::to_string(vocab));
    }
  }
  const std::size_t n = ids.size();
  std::vector<double> out(n * dim);
  const double* tv = table.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t row = static_cast<std::size_t>(ids[i]);
    std::copy(tv + row * dim, tv + (row + 1) * dim, out.begin() + i * dim);
  }
  Node* tn = table.node();
  std::vector<int> ids_copy(ids.begin(), ids.end());
  return make_op({n, dim}, std::move(out), {table},
                 [tn, dim, ids_copy = std::move(ids_copy)](Node& self) {
                   if (!tn->requires_grad) return;
                   double* tg = tn->grad_data();
                   const double* g = self.grad.data();
                   for (std::size_t i = 0; i < ids_copy.size(); ++i) {
                     const std::size_t row = static_cast<std::size_t>(ids_copy[i]);
                     for (std::size_t j = 0; j < dim; ++j)
                       tg[row * dim + j] += g[i * dim + j];
                   }
                 });
}

Tensor sum(const Tensor& a) {
  require_defined(a, "sum");
  double s = 0.0;
  for (double v : a.data()) s += v;
  Node* an = a.node();
  return make_op({}, {s}, {a}, [an](Node& self) {
    if (!an->requires_grad) return;
    double* ag = an->grad_data();
    const double g = self.grad[0];
    for (std::size_t i = 0; i < an->value.size(); ++i) ag[i] += g;
  });
}

Tensor mean(const Tensor& a) {
  require_defined(a, "mean");
  if (a.size() == 0) throw std::invalid_argument("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

}  // namespace scout
