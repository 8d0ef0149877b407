#include "scout/teachers.hpp"

#include <cstring>
#include <fstream>

#include "scout/checkpoint.hpp"
#include "scout/ops.hpp"
#include "scout/training.hpp"

namespace scout {

ModelConfig TeacherSpec::to_model_config() const {
  ModelConfig c;
  c.vocab_size = vocab_size;
  c.model_dim = model_dim;
  c.num_heads = num_heads;
  c.num_layers = num_layers;
  c.max_seq_len = max_seq_len;
  c.num_iterations = 1;
  return c;
}

std::size_t TeacherSpec::parameter_count() const {
  const std::size_t d = model_dim;
  const std::size_t per_layer = 2 * d          // ln1
                                + 4 * d * d    // attention
                                + 2 * d        // ln2
                                + d * 4 * d + 4 * d + 4 * d * d + d;  // ffn
  return vocab_size * d + max_seq_len * d + num_layers * per_layer + 2 * d +
         d * vocab_size;
}

void TeacherLadder::add(TeacherSpec spec, Transformer model) {
  if (spec.vocab_size != model.config().vocab_size ||
      spec.model_dim != model.config().model_dim ||
      spec.num_layers != model.config().num_layers) {
    throw std::invalid_argument("TeacherLadder: spec does not describe the model");
  }
  if (!teachers_.empty()) {
    const TeacherSpec& prev = teachers_.back().spec;
    if (spec.capacity_rank <= prev.capacity_rank) {
      throw std::invalid_argument("TeacherLadder: capacity_rank " +
                                  std::to_string(spec.capacity_rank) +
                                  " does not exceed previous rank " +
                                  std::to_string(prev.capacity_rank));
    }
    if (spec.parameter_count() < prev.parameter_count()) {
      throw std::invalid_argument(
          "TeacherLadder: parameter count decreases along the ladder");
    }
  }
  model.set_frozen(true);
  teachers_.push_back({spec, std::move(model)});
}

const Transformer& TeacherLadder::strongest() const {
  if (teachers_.empty()) throw std::invalid_argument("TeacherLadder: empty ladder");
  return teachers_.back().model;
}

TeacherTrainResult train_teacher(const TeacherSpec& spec, const Dataset& train,
                                 const TeacherTrainOptions& options,
                                 std::uint64_t seed) {
  Transformer model(spec.to_model_config(), seed);
  TrainOptions train_opts;
  train_opts.batch_size = options.batch_size;
  OptimizerSchedule schedule;
  schedule.lr_pretrained = options.learning_rate;
  schedule.warmup_fraction = options.warmup_fraction;
  schedule.total_steps = options.steps;

  std::vector<double> history;
  double final_loss = 0.0;
  if (options.steps > 0) {
    const TrainResult tr = pretrain_backbone(model, train, options.steps,
                                             options.learning_rate, train_opts,
                                             seed);
    history.reserve(tr.trajectory.size());
    for (const auto& r : tr.trajectory) history.push_back(r.total);
    final_loss = tr.final_loss;
  }
  model.set_frozen(true);
  return {std::move(model), std::move(history), final_loss};
}

Distribution soft_targets(const Transformer& teacher, std::span<const int> x) {
  if (!teacher.frozen()) {
    throw std::invalid_argument("soft_targets: teacher must be frozen");
  }
  // Frozen parameters build no graph, so the result carries no gradients.
  return softmax(teacher.forward_logits(x), 1);
}

Distribution truncate_renormalize(const Tensor& teacher_logits,
                                  std::size_t student_vocab) {
  if (!teacher_logits.defined()) {
    throw std::invalid_argument("truncate_renormalize: undefined logits");
  }
  const bool is_vector = teacher_logits.rank() == 1;
  const std::size_t teacher_vocab =
      is_vector ? teacher_logits.shape()[0] : teacher_logits.cols();
  if (student_vocab > teacher_vocab) {
    throw std::invalid_argument("truncate_renormalize: student vocabulary " +
                                std::to_string(student_vocab) +
                                " exceeds teacher vocabulary " +
                                std::to_string(teacher_vocab));
  }
  // Softmax over the kept logits only; dropping ids before the softmax
  // redistributes their mass proportionally across the kept set.
  if (is_vector) {
    const Tensor kept = student_vocab == teacher_vocab
                            ? teacher_logits
                            : reshape(slice_cols(reshape(teacher_logits,
                                                         {1, teacher_vocab}),
                                                 0, student_vocab),
                                      {student_vocab});
    return softmax(kept, 0);
  }
  const Tensor kept = student_vocab == teacher_vocab
                          ? teacher_logits
                          : slice_cols(teacher_logits, 0, student_vocab);
  return softmax(kept, 1);
}

std::vector<std::pair<std::size_t, double>> measure_kl_ladder(
    const Transformer& student, const TeacherLadder& ladder,
    const std::vector<Example>& prompts) {
  if (prompts.empty()) {
    throw std::invalid_argument("measure_kl_ladder: empty prompt sample");
  }
  if (ladder.empty()) {
    throw std::invalid_argument("measure_kl_ladder: empty ladder");
  }
  // Evaluate a frozen copy so no graph is built.
  Transformer frozen_student = student.clone();
  frozen_student.set_frozen(true);
  const std::size_t student_vocab = frozen_student.config().vocab_size;

  std::vector<std::pair<std::size_t, double>> out;
  for (std::size_t k = 0; k < ladder.size(); ++k) {
    const Transformer& teacher = ladder.teacher(k);
    double total = 0.0;
    std::size_t total_rows = 0;
    for (const auto& prompt : prompts) {
      const std::span<const int> x(prompt.tokens.data(), prompt.tokens.size());
      Distribution q;
      if (teacher.config().vocab_size == student_vocab) {
        q = soft_targets(teacher, x);
      } else {
        q = truncate_renormalize(teacher.forward_logits(x), student_vocab);
      }
      const Distribution p = softmax(frozen_student.forward_logits(x), 1);
      const std::size_t rows = q.num_rows();
      total += kl_divergence(q, p).item() * static_cast<double>(rows);
      total_rows += rows;
    }
    out.emplace_back(ladder.spec(k).capacity_rank,
                     total / static_cast<double>(total_rows));
  }
  return out;
}

namespace {

constexpr char kCacheMagic[8] = {'S', 'C', 'O', 'U', 'T', 'S', 'T', 'C'};
constexpr std::uint32_t kCacheVersion = 1;

}  // namespace

SoftTargetCache SoftTargetCache::build(const Transformer& teacher,
                                       const Dataset& data,
                                       std::size_t student_vocab) {
  SoftTargetCache cache;
  cache.teacher_checksum_ = params_checksum(teacher.params());
  cache.dataset_checksum_ = data.checksum();
  cache.vocab_ = student_vocab;
  cache.rows_.reserve(data.examples.size());
  for (const auto& ex : data.examples) {
    const std::span<const int> input(ex.tokens.data(), ex.tokens.size() - 1);
    Distribution q;
    if (teacher.config().vocab_size == student_vocab) {
      q = soft_targets(teacher, input);
    } else {
      q = truncate_renormalize(teacher.forward_logits(input), student_vocab);
    }
    const auto span = q.probs().data();
    cache.rows_.emplace_back(span.begin(), span.end());
  }
  return cache;
}

void SoftTargetCache::write(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) {
    throw std::runtime_error("soft-target cache: cannot write " + path.string());
  }
  os.write(kCacheMagic, sizeof(kCacheMagic));
  const std::uint32_t version = kCacheVersion;
  os.write(reinterpret_cast<const char*>(&version), sizeof(version));
  os.write(reinterpret_cast<const char*>(&teacher_checksum_), sizeof(teacher_checksum_));
  os.write(reinterpret_cast<const char*>(&dataset_checksum_), sizeof(dataset_checksum_));
  const std::uint64_t vocab = vocab_;
  const std::uint64_t count = rows_.size();
  os.write(reinterpret_cast<const char*>(&vocab), sizeof(vocab));
  os.write(reinterpret_cast<const char*>(&count), sizeof(count));
  for (std::uint64_t id = 0; id < count; ++id) {
    const auto& rows = rows_[id];
    const std::uint64_t num_rows = rows.size() / vocab_;
    os.write(reinterpret_cast<const char*>(&id), sizeof(id));
    os.write(reinterpret_cast<const char*>(&num_rows), sizeof(num_rows));
    os.write(reinterpret_cast<const char*>(rows.data()),
             static_cast<std::streamsize>(rows.size() * sizeof(double)));
  }
}

SoftTargetCache SoftTargetCache::read(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw std::runtime_error("soft-target cache: cannot read " + path.string());
  }
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kCacheMagic, sizeof(magic)) != 0) {
    throw std::runtime_error("soft-target cache: bad magic in " + path.string());
  }
  std::uint32_t version = 0;
  is.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (version != kCacheVersion) {
    throw std::runtime_error("soft-target cache: unsupported version");
  }
  SoftTargetCache cache;
  std::uint64_t vocab = 0, count = 0;
  is.read(reinterpret_cast<char*>(&cache.teacher_checksum_),
          sizeof(cache.teacher_checksum_));
  is.read(reinterpret_cast<char*>(&cache.dataset_checksum_),
          sizeof(cache.dataset_checksum_));
  is.read(reinterpret_cast<char*>(&vocab), sizeof(vocab));
  is.read(reinterpret_cast<char*>(&count), sizeof(count));
  if (!is) throw std::runtime_error("soft-target cache: truncated header");
  cache.vocab_ = vocab;
  cache.rows_.resize(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::uint64_t id = 0, num_rows = 0;
    is.read(reinterpret_cast<char*>(&id), sizeof(id));
    is.read(reinterpret_cast<char*>(&num_rows), sizeof(num_rows));
    if (!is || id >= count) {
      throw std::runtime_error("soft-target cache: corrupt entry header");
    }
    auto& rows = cache.rows_[id];
    rows.resize(num_rows * vocab);
    is.read(reinterpret_cast<char*>(rows.data()),
            static_cast<std::streamsize>(rows.size() * sizeof(double)));
    if (!is) throw std::runtime_error("soft-target cache: truncated rows");
  }
  return cache;
}

}  // namespace scout
