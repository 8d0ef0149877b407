#include "scout/distribution.hpp"

#include <cmath>

#include "scout/ops.hpp"

namespace scout {

namespace {

using detail::Node;

// Row geometry of a distribution tensor: rank-1 is a single row.
struct RowView {
  std::size_t rows;
  std::size_t cols;
};

RowView row_view(const Tensor& t) {
  if (t.rank() == 1) return {1, t.shape()[0]};
  if (t.rank() == 2) return {t.shape()[0], t.shape()[1]};
  throw std::invalid_argument("distribution: rank-1 or rank-2 required, got " +
                              shape_to_string(t.shape()));
}

void check_mask(std::span<const std::uint8_t> mask, std::size_t rows, const char* op) {
  if (!mask.empty() && mask.size() != rows) {
    throw std::invalid_argument(std::string(op) + ": mask length " +
                                std::to_string(mask.size()) +
                                " does not match row count " + std::to_string(rows));
  }
}

std::size_t count_active(std::span<const std::uint8_t> mask, std::size_t rows) {
  if (mask.empty()) return rows;
  std::size_t m = 0;
  for (std::uint8_t v : mask) m += v ? 1 : 0;
  return m;
}

}  // namespace

Distribution::Distribution(Tensor probs) : probs_(std::move(probs)) {
  support_size_ = row_view(probs_).cols;
}

std::size_t Distribution::num_rows() const { return row_view(probs_).rows; }

Distribution Distribution::from_probs(Tensor probs) {
  const RowView v = row_view(probs);
  const double* p = probs.data().data();
  for (std::size_t r = 0; r < v.rows; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < v.cols; ++j) {
      const double x = p[r * v.cols + j];
      if (x < 0.0) {
        throw std::invalid_argument("Distribution: negative probability at row " +
                                    std::to_string(r));
      }
      s += x;
    }
    if (std::abs(s - 1.0) > 1e-9) {
      throw std::invalid_argument("Distribution: row " + std::to_string(r) +
                                  " sums to " + std::to_string(s) + ", not 1");
    }
  }
  return Distribution(std::move(probs));
}

Distribution softmax(const Tensor& logits, std::size_t axis) {
  if (!logits.defined()) throw std::invalid_argument("softmax: undefined tensor");
  if (logits.rank() == 1) {
    if (axis != 0) {
      throw std::invalid_argument("softmax: axis " + std::to_string(axis) +
                                  " invalid for rank-1 tensor");
    }
    const std::size_t n = logits.shape()[0];
    Tensor rows = softmax_rows(reshape(logits, {1, n}));
    return Distribution(reshape(rows, {n}));
  }
  if (logits.rank() == 2) {
    if (axis == 1) return Distribution(softmax_rows(logits));
    if (axis == 0) {
      return Distribution(transpose(softmax_rows(transpose(logits))));
    }
    throw std::invalid_argument("softmax: axis " + std::to_string(axis) +
                                " invalid for rank-2 tensor");
  }
  throw std::invalid_argument("softmax: rank-1 or rank-2 required, got " +
                              shape_to_string(logits.shape()));
}

Tensor kl_divergence(const Distribution& q, const Distribution& p,
                     std::span<const std::uint8_t> row_mask) {
  if (!q.defined() || !p.defined()) {
    throw std::invalid_argument("kl_divergence: undefined distribution");
  }
  if (q.support_size() != p.support_size() ||
      q.probs().shape() != p.probs().shape()) {
    throw std::invalid_argument(
        "kl_divergence: support mismatch " + shape_to_string(q.probs().shape()) +
        " vs " + shape_to_string(p.probs().shape()));
  }
  const RowView v = row_view(q.probs());
  check_mask(row_mask, v.rows, "kl_divergence");
  const std::size_t active = count_active(row_mask, v.rows);
  if (active == 0) {
    throw std::invalid_argument("kl_divergence: no unmasked positions");
  }

  const double* qv = q.probs().data().data();
  const double* pv = p.probs().data().data();
  double total = 0.0;
  for (std::size_t r = 0; r < v.rows; ++r) {
    if (!row_mask.empty() && !row_mask[r]) continue;
    double row_kl = 0.0;
    for (std::size_t j = 0; j < v.cols; ++j) {
      const double qj = qv[r * v.cols + j];
      const double qf = std::max(qj, kProbFloor);
      const double pf = std::max(pv[r * v.cols + j], kProbFloor);
      row_kl += qj * (std::log(qf) - std::log(pf));
    }
    total += row_kl;
  }
  const double inv_m = 1.0 / static_cast<double>(active);

  Node* qn = q.probs().node();
  Node* pn = p.probs().node();
  std::vector<std::uint8_t> mask_copy(row_mask.begin(), row_mask.end());
  auto node = std::make_shared<Node>();
  node->shape = {};
  node->value = {total * inv_m};
  if (qn->requires_grad || pn->requires_grad) {
    node->requires_grad = true;
    node->parents = {q.probs().node_ptr(), p.probs().node_ptr()};
    node->backprop = [qn, pn, v, inv_m, mask_copy = std::move(mask_copy)](Node& self) {
      const double g = self.grad[0] * inv_m;
      for (std::size_t r = 0; r < v.rows; ++r) {
        if (!mask_copy.empty() && !mask_copy[r]) continue;
        for (std::size_t j = 0; j < v.cols; ++j) {
          const std::size_t idx = r * v.cols + j;
          const double qj = qn->value[idx];
          const double pj = pn->value[idx];
          const double qf = std::max(qj, kProbFloor);
          const double pf = std::max(pj, kProbFloor);
          if (pn->requires_grad && pj > kProbFloor) {
            pn->grad_data()[idx] += g * (-qj / pf);
          }
          if (qn->requires_grad) {
            double d = std::log(qf) - std::log(pf);
            if (qj > kProbFloor) d += 1.0;
            qn->grad_data()[idx] += g * d;
          }
        }
      }
    };
  }
  return Tensor::wrap(std::move(node));
}

Tensor cross_entropy(const Distribution& p, std::span<const int> targets,
                     std::span<const std::uint8_t> row_mask) {
  if (!p.defined()) throw std::invalid_argument("cross_entropy: undefined distribution");
  const RowView v = row_view(p.probs());
  if (targets.size() != v.rows) {
    throw std::invalid_argument("cross_entropy: " + std::to_string(targets.size()) +
                                " targets for " + std::to_string(v.rows) + " rows");
  }
  for (int t : targets) {
    if (t < 0 || static_cast<std::size_t>(t) >= v.cols) {
      throw std::out_of_range("cross_entropy: target index " + std::to_string(t) +
                              " outside support of size " + std::to_string(v.cols));
    }
  }
  check_mask(row_mask, v.rows, "cross_entropy");
  const std::size_t active = count_active(row_mask, v.rows);
  if (active == 0) {
    throw std::invalid_argument("cross_entropy: no unmasked positions");
  }

  const double* pv = p.probs().data().data();
  double total = 0.0;
  for (std::size_t r = 0; r < v.rows; ++r) {
    if (!row_mask.empty() && !row_mask[r]) continue;
    const double pf = std::max(pv[r * v.cols + static_cast<std::size_t>(targets[r])],
                               kProbFloor);
    total -= std::log(pf);
  }
  const double inv_m = 1.0 / static_cast<double>(active);

  Node* pn = p.probs().node();
  std::vector<int> targets_copy(targets.begin(), targets.end());
  std::vector<std::uint8_t> mask_copy(row_mask.begin(), row_mask.end());
  auto node = std::make_shared<Node>();
  node->shape = {};
  node->value = {total * inv_m};
  if (pn->requires_grad) {
    node->requires_grad = true;
    node->parents = {p.probs().node_ptr()};
    node->backprop = [pn, v, inv_m, targets_copy = std::move(targets_copy),
                      mask_copy = std::move(mask_copy)](Node& self) {
      const double g = self.grad[0] * inv_m;
      for (std::size_t r = 0; r < v.rows; ++r) {
        if (!mask_copy.empty() && !mask_copy[r]) continue;
        const std::size_t idx =
            r * v.cols + static_cast<std::size_t>(targets_copy[r]);
        const double pj = pn->value[idx];
        if (pj > kProbFloor) {
          pn->grad_data()[idx] += g * (-1.0 / pj);
        }
      }
    };
  }
  return Tensor::wrap(std::move(node));
}

double entropy_nats(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(std::max(p, kProbFloor));
  }
  return h;
}

}  // namespace scout
