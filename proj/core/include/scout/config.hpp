#pragma once
// Model hyperparameters and the head/recursive/tail layer partition.

#include <cstddef>
#include <string>

namespace scout {

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t model_dim = 32;
  std::size_t num_heads = 2;
  std::size_t num_layers = 4;
  std::size_t max_seq_len = 32;
  std::size_t num_iterations = 3;  // T

  // Rejects zero extents, indivisible heads, T < 1.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

enum class PartitionCase { Case1, Case2 };

PartitionCase partition_case_from_name(std::string_view name);
std::string partition_case_name(PartitionCase c);

// Contiguous split of the layer stack. Head always includes the embedding,
// tail always includes the output projection; tail layers may be empty.
struct PartitionSpec {
  std::size_t head_end = 0;    // head layers are [0, head_end)
  std::size_t rec_end = 0;     // recursive layers are [head_end, rec_end)
  std::size_t num_layers = 0;  // tail layers are [rec_end, num_layers)
  bool head_includes_embedding = true;
  bool tail_includes_projection = true;

  std::size_t head_layers() const { return head_end; }
  std::size_t recursive_layers() const { return rec_end - head_end; }
  std::size_t tail_layers() const { return num_layers - rec_end; }

  bool operator==(const PartitionSpec&) const = default;
};

// Case 2: embedding + first ⌈L/2⌉ layers → head, remaining layers →
// recursive, output projection only → tail. Case 1: thirds, with the final
// third plus the projection as tail (head gets ⌈L/3⌉, tail ⌊L/3⌋, the
// middle remainder recurses). Fewer than 2 layers is rejected.
PartitionSpec partition_model(const ModelConfig& config, PartitionCase c);

}  // namespace scout
