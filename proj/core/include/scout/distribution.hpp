#pragma once
// Probability distributions over a token vocabulary, one row per sequence
// position, plus the distillation loss primitives built on them.
//
// Probabilities are clamped at kProbFloor before any logarithm; this keeps
// KL and cross-entropy finite while perturbing losses far below test
// tolerances.

#include <cstdint>
#include <optional>
#include <span>

#include "scout/tensor.hpp"

namespace scout {

inline constexpr double kProbFloor = 1e-12;

class Distribution {
 public:
  Distribution() = default;

  // Validates that every trailing-axis slice sums to 1 within 1e-9 and all
  // entries are nonnegative.
  static Distribution from_probs(Tensor probs);

  const Tensor& probs() const { return probs_; }
  std::size_t support_size() const { return support_size_; }
  // Number of trailing-axis slices (1 for a rank-1 distribution).
  std::size_t num_rows() const;
  bool defined() const { return probs_.defined(); }

  Distribution detach() const { return Distribution(probs_.detach()); }

 private:
  explicit Distribution(Tensor probs);
  Tensor probs_;
  std::size_t support_size_ = 0;

  friend Distribution softmax(const Tensor&, std::size_t);
  friend Distribution truncate_renormalize(const Tensor&, std::size_t);
};

// Numerically stable (max-subtracted) softmax along `axis`. Rank-1 tensors
// take axis 0; rank-2 tensors accept axis 0 (columns) or 1 (rows).
Distribution softmax(const Tensor& logits, std::size_t axis);

// KL(q ‖ p) = sum over support of q·(ln q − ln p), averaged over rows.
// When row_mask is given, only rows with a nonzero mask entry contribute.
// Differentiable w.r.t. both arguments.
Tensor kl_divergence(const Distribution& q, const Distribution& p,
                     std::span<const std::uint8_t> row_mask = {});

// Mean negative log-probability of the target token per row, over unmasked
// rows. Targets must lie inside the support.
Tensor cross_entropy(const Distribution& p, std::span<const int> targets,
                     std::span<const std::uint8_t> row_mask = {});

// Shannon entropy in nats of a single distribution row (no gradient).
double entropy_nats(std::span<const double> probs);

// Declared here, defined with the teacher utilities: keeps the first
// `student_vocab` logits and renormalizes by taking softmax over the kept
// set only.
Distribution truncate_renormalize(const Tensor& teacher_logits,
                                  std::size_t student_vocab);

}  // namespace scout
