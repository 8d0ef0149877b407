#include "scout/config.hpp"

#include <stdexcept>

namespace scout {

void ModelConfig::validate() const {
  if (vocab_size == 0) throw std::invalid_argument("[model] vocab_size must be positive");
  if (model_dim == 0) throw std::invalid_argument("[model] model_dim must be positive");
  if (num_heads == 0 || model_dim % num_heads != 0) {
    throw std::invalid_argument("[model] model_dim " + std::to_string(model_dim) +
                                " must be divisible by num_heads " +
                                std::to_string(num_heads));
  }
  if (num_layers == 0) throw std::invalid_argument("[model] num_layers must be positive");
  if (max_seq_len == 0) throw std::invalid_argument("[model] max_seq_len must be positive");
  if (num_iterations == 0) {
    throw std::invalid_argument("[model] num_iterations must be at least 1");
  }
}

PartitionCase partition_case_from_name(std::string_view name) {
  if (name == "case1") return PartitionCase::Case1;
  if (name == "case2") return PartitionCase::Case2;
  throw std::invalid_argument("unknown partition case '" + std::string(name) +
                              "' (expected case1 or case2)");
}

std::string partition_case_name(PartitionCase c) {
  return c == PartitionCase::Case1 ? "case1" : "case2";
}

PartitionSpec partition_model(const ModelConfig& config, PartitionCase c) {
  const std::size_t layers = config.num_layers;
  if (layers < 2) {
    throw std::invalid_argument("partition_model: at least 2 layers required, got " +
                                std::to_string(layers));
  }
  PartitionSpec spec;
  spec.num_layers = layers;
  if (c == PartitionCase::Case2) {
    spec.head_end = (layers + 1) / 2;  // ceil(L/2): larger heads expose richer priors
    spec.rec_end = layers;
  } else {
    const std::size_t head = (layers + 2) / 3;  // ceil(L/3)
    const std::size_t tail = layers / 3;        // floor(L/3)
    spec.head_end = head;
    spec.rec_end = layers - tail;
  }
  if (spec.recursive_layers() == 0) {
    throw std::invalid_argument("partition_model: recursive block is empty");
  }
  return spec;
}

}  // namespace scout
