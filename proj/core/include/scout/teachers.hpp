#pragma once
// The capacity ladder of frozen teacher models: construction, soft targets,
// vocabulary reconciliation, the KL-vs-capacity measurement, and the on-disk
// soft-target cache.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "scout/distribution.hpp"
#include "scout/model.hpp"
#include "scout/tasks.hpp"

namespace scout {

struct TeacherSpec {
  std::size_t capacity_rank = 1;  // position in the ladder, strictly increasing
  std::size_t model_dim = 32;
  std::size_t num_heads = 2;
  std::size_t num_layers = 2;
  std::size_t vocab_size = 0;
  std::size_t max_seq_len = 32;

  ModelConfig to_model_config() const;
  std::size_t parameter_count() const;  // closed form of the backbone size
};

// Ordered set of frozen teachers. Rank must strictly increase and parameter
// counts must be nondecreasing along the ladder.
class TeacherLadder {
 public:
  void add(TeacherSpec spec, Transformer model);
  std::size_t size() const { return teachers_.size(); }
  bool empty() const { return teachers_.empty(); }
  const Transformer& teacher(std::size_t i) const { return teachers_.at(i).model; }
  const TeacherSpec& spec(std::size_t i) const { return teachers_.at(i).spec; }
  const Transformer& strongest() const;

 private:
  struct Entry {
    TeacherSpec spec;
    Transformer model;
  };
  std::vector<Entry> teachers_;
};

struct TeacherTrainOptions {
  std::size_t steps = 600;
  std::size_t batch_size = 16;
  double learning_rate = 1e-3;
  double warmup_fraction = 0.10;
};

struct TeacherTrainResult {
  Transformer model;  // frozen
  std::vector<double> loss_history;
  double final_loss = 0.0;
};

// Plain supervised next-token training of a standard (non-recursive) stack;
// the returned model is frozen. Divergence (NaN loss) reports seed and step.
TeacherTrainResult train_teacher(const TeacherSpec& spec, const Dataset& train,
                                 const TeacherTrainOptions& options,
                                 std::uint64_t seed);

// q = softmax(teacher(x)) per position, no gradients retained. The teacher
// must be frozen.
Distribution soft_targets(const Transformer& teacher, std::span<const int> x);

// Declared in distribution.hpp; keeps the first student_vocab logits and
// softmaxes over the kept set only, so mass on dropped ids is redistributed
// proportionally.
// Distribution truncate_renormalize(const Tensor& teacher_logits, std::size_t);

// Row of (capacity_rank, mean KL(teacher ‖ student)) over all prompts and
// positions, teacher vocabulary reconciled to the student's.
std::vector<std::pair<std::size_t, double>> measure_kl_ladder(
    const Transformer& student, const TeacherLadder& ladder,
    const std::vector<Example>& prompts);

// Binary table of (sequence id, position, distribution row), keyed by the
// teacher parameter checksum and the dataset checksum.
class SoftTargetCache {
 public:
  static SoftTargetCache build(const Transformer& teacher, const Dataset& data,
                               std::size_t student_vocab);
  void write(const std::filesystem::path& path) const;
  static SoftTargetCache read(const std::filesystem::path& path);

  std::uint64_t teacher_checksum() const { return teacher_checksum_; }
  std::uint64_t dataset_checksum() const { return dataset_checksum_; }
  std::size_t vocab() const { return vocab_; }
  std::size_t num_sequences() const { return rows_.size(); }
  // Rows for one sequence: (len-1) × vocab, position-major.
  const std::vector<double>& rows(std::size_t sequence_id) const {
    return rows_.at(sequence_id);
  }
  bool matches(std::uint64_t teacher_ck, std::uint64_t dataset_ck) const {
    return teacher_checksum_ == teacher_ck && dataset_checksum_ == dataset_ck;
  }

 private:
  std::uint64_t teacher_checksum_ = 0;
  std::uint64_t dataset_checksum_ = 0;
  std::size_t vocab_ = 0;
  std::vector<std::vector<double>> rows_;
};

}  // namespace scout
