#include "scout/training.hpp"

#include <cassert>
#include <cmath>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "scout/ops.hpp"

namespace scout {

PlanMode plan_mode_from_name(std::string_view name) {
  if (name == "sft") return PlanMode::SFT;
  if (name == "dsft") return PlanMode::DSFT;
  if (name == "r_sft") return PlanMode::RSft;
  if (name == "r_distill_eq") return PlanMode::RDistillEq;
  if (name == "r_distill_wt") return PlanMode::RDistillWt;
  if (name == "r_scout") return PlanMode::RScout;
  if (name == "scout") return PlanMode::Scout;
  throw std::invalid_argument(
      "unknown plan mode '" + std::string(name) +
      "' (expected one of: sft, dsft, r_sft, r_distill_eq, r_distill_wt, "
      "r_scout, scout)");
}

std::string plan_mode_name(PlanMode mode) {
  switch (mode) {
    case PlanMode::SFT: return "sft";
    case PlanMode::DSFT: return "dsft";
    case PlanMode::RSft: return "r_sft";
    case PlanMode::RDistillEq: return "r_distill_eq";
    case PlanMode::RDistillWt: return "r_distill_wt";
    case PlanMode::RScout: return "r_scout";
    case PlanMode::Scout: return "scout";
  }
  throw std::invalid_argument("plan_mode_name: invalid mode");
}

bool plan_is_recursive(PlanMode mode) {
  return mode != PlanMode::SFT && mode != PlanMode::DSFT;
}

void SupervisionPlan::validate(std::size_t ladder_size) const {
  if (per_iteration.empty()) {
    throw std::invalid_argument("supervision plan has no supervised iterations");
  }
  if (!plan_is_recursive(mode) && per_iteration.size() != 1) {
    throw std::invalid_argument("sft/dsft plans supervise exactly one decoding");
  }
  double lambda_sum = 0.0;
  for (const auto& it : per_iteration) {
    if (it.lambda < 0.0 || it.alpha < 0.0) {
      throw std::invalid_argument("plan weights must be nonnegative");
    }
    lambda_sum += it.lambda;
    if (it.teacher && *it.teacher >= ladder_size) {
      throw std::invalid_argument("plan references teacher " +
                                  std::to_string(*it.teacher) +
                                  " but the ladder has " +
                                  std::to_string(ladder_size));
    }
  }
  if (lambda_sum == 0.0) {
    throw std::invalid_argument("plan rejected: all λ weights are zero");
  }
}

SupervisionPlan make_plan(PlanMode mode, const TeacherLadder& ladder,
                          std::size_t iterations, double alpha) {
  if (iterations == 0) throw std::invalid_argument("make_plan: T must be positive");
  const bool needs_teachers = mode != PlanMode::SFT && mode != PlanMode::RSft;
  if (needs_teachers && ladder.empty()) {
    throw std::invalid_argument("make_plan: " + plan_mode_name(mode) +
                                " requires a teacher ladder");
  }
  if ((mode == PlanMode::Scout || mode == PlanMode::RScout) &&
      ladder.size() < iterations) {
    throw std::invalid_argument("make_plan: ladder of " +
                                std::to_string(ladder.size()) +
                                " teachers cannot supervise " +
                                std::to_string(iterations) + " iterations");
  }

  SupervisionPlan plan;
  plan.mode = mode;
  const std::size_t strongest = ladder.empty() ? 0 : ladder.size() - 1;
  const double uniform = 1.0 / static_cast<double>(iterations);

  switch (mode) {
    case PlanMode::SFT:
      plan.per_iteration = {{std::nullopt, 1.0, 1.0}};
      break;
    case PlanMode::DSFT:
      plan.per_iteration = {{strongest, 1.0, alpha}};
      break;
    case PlanMode::RSft:
      for (std::size_t t = 0; t < iterations; ++t) {
        plan.per_iteration.push_back({std::nullopt, uniform, 1.0});
      }
      break;
    case PlanMode::RDistillEq:
      for (std::size_t t = 0; t < iterations; ++t) {
        plan.per_iteration.push_back({strongest, uniform, alpha});
      }
      break;
    case PlanMode::RDistillWt: {
      std::vector<double> weights;
      if (iterations == 3) {
        weights = {0.2, 0.3, 0.5};
      } else {
        double denom = 0.0;
        for (std::size_t t = 1; t <= iterations; ++t) denom += static_cast<double>(t);
        for (std::size_t t = 1; t <= iterations; ++t) {
          weights.push_back(static_cast<double>(t) / denom);
        }
      }
      for (std::size_t t = 0; t < iterations; ++t) {
        plan.per_iteration.push_back({strongest, weights[t], alpha});
      }
      break;
    }
    case PlanMode::Scout:
      for (std::size_t t = 0; t < iterations; ++t) {
        plan.per_iteration.push_back({t, uniform, alpha});
      }
      break;
    case PlanMode::RScout:
      for (std::size_t t = 0; t < iterations; ++t) {
        plan.per_iteration.push_back({iterations - 1 - t, uniform, alpha});
      }
      break;
  }
  plan.validate(ladder.size());
  return plan;
}

TrainingBatch TrainingBatch::next_token(const Example& example) {
  if (example.tokens.size() < 2) {
    throw std::invalid_argument("TrainingBatch: example shorter than 2 tokens");
  }
  TrainingBatch b;
  const std::size_t n = example.tokens.size() - 1;
  b.input.assign(example.tokens.begin(), example.tokens.end() - 1);
  b.targets.assign(example.tokens.begin() + 1, example.tokens.end());
  b.mask.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    b.mask[i] = (i + 1 >= example.answer_begin) ? 1 : 0;
  }
  return b;
}

void TrainingBatch::validate() const {
  if (input.size() != targets.size() || input.size() != mask.size()) {
    throw std::invalid_argument("TrainingBatch: x, y*, mask lengths differ");
  }
}

std::size_t TrainingBatch::active_positions() const {
  std::size_t n = 0;
  for (auto m : mask) n += m ? 1 : 0;
  return n;
}

PerStepLoss per_step_loss(const Distribution& p, const Distribution* q,
                          const TrainingBatch& batch, double alpha) {
  batch.validate();
  if (batch.active_positions() == 0) {
    throw std::invalid_argument("per_step_loss: all positions masked out");
  }
  PerStepLoss out;
  const Tensor ce = cross_entropy(p, batch.targets, batch.mask);
  out.breakdown.ce = ce.item();
  if (q != nullptr) {
    const Tensor kl = kl_divergence(*q, p, batch.mask);
    out.breakdown.kl = kl.item();
    out.value = add(kl, scale(ce, alpha));
  } else {
    out.value = scale(ce, alpha);
  }
  out.breakdown.total = out.value.item();
  return out;
}

TotalLoss total_loss(const std::vector<Tensor>& per_step_logits,
                     const SupervisionPlan& plan, const TrainingBatch& batch,
                     const std::vector<std::optional<Distribution>>& targets) {
  if (plan.per_iteration.size() > per_step_logits.size()) {
    throw std::invalid_argument("total_loss: plan supervises " +
                                std::to_string(plan.per_iteration.size()) +
                                " iterations but only " +
                                std::to_string(per_step_logits.size()) +
                                " decodings exist");
  }
  if (targets.size() != plan.per_iteration.size()) {
    throw std::invalid_argument("total_loss: one target slot per supervised "
                                "iteration required");
  }
  double lambda_sum = 0.0;
  for (const auto& it : plan.per_iteration) lambda_sum += it.lambda;
  if (lambda_sum == 0.0) {
    throw std::invalid_argument("total_loss: all λ weights are zero");
  }

  // SFT/DSFT supervise only the final decoding.
  const bool final_only = !plan_is_recursive(plan.mode);

  TotalLoss out;
  Tensor acc;
  for (std::size_t i = 0; i < plan.per_iteration.size(); ++i) {
    const auto& sup = plan.per_iteration[i];
    const std::size_t logits_index =
        final_only ? per_step_logits.size() - 1 : i;
    const Distribution p = softmax(per_step_logits[logits_index], 1);
    const Distribution* q = targets[i] ? &*targets[i] : nullptr;
    PerStepLoss step = per_step_loss(p, q, batch, sup.alpha);
    out.per_step.push_back(step.breakdown);
    const Tensor weighted = scale(step.value, sup.lambda);
    acc = acc.defined() ? add(acc, weighted) : weighted;
  }
  out.value = acc;
  return out;
}

TotalLoss total_loss(const StepOutputs& outputs, const SupervisionPlan& plan,
                     const TrainingBatch& batch, const TeacherLadder& ladder) {
  std::vector<std::optional<Distribution>> targets;
  for (const auto& sup : plan.per_iteration) {
    if (!sup.teacher) {
      targets.emplace_back(std::nullopt);
      continue;
    }
    const Transformer& teacher = ladder.teacher(*sup.teacher);
    const std::size_t student_vocab = outputs.per_step_logits.front().cols();
    if (teacher.config().vocab_size == student_vocab) {
      targets.emplace_back(soft_targets(teacher, batch.input));
    } else {
      const Tensor logits = teacher.forward_logits(batch.input);
      targets.emplace_back(truncate_renormalize(logits, student_vocab));
    }
  }
  return total_loss(outputs.per_step_logits, plan, batch, targets);
}

std::size_t OptimizerSchedule::warmup_steps() const {
  return static_cast<std::size_t>(
      std::llround(warmup_fraction * static_cast<double>(total_steps)));
}

double OptimizerSchedule::factor(std::size_t step) const {
  if (total_steps == 0) return 1.0;
  const std::size_t warmup = warmup_steps();
  if (step < warmup) {
    return static_cast<double>(step) / static_cast<double>(warmup);
  }
  if (total_steps <= warmup) return 1.0;
  double progress = static_cast<double>(step - warmup) /
                    static_cast<double>(total_steps - warmup);
  progress = std::min(progress, 1.0);
  return 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

AdamW::AdamW(const ParameterStore& params, AdamWConfig config) : config_(config) {
  for (const auto& e : params.entries()) {
    Slot slot;
    slot.param = e.tensor;
    slot.is_new = e.is_new;
    slot.m.assign(e.tensor.size(), 0.0);
    slot.v.assign(e.tensor.size(), 0.0);
    slot.accum.assign(e.tensor.size(), 0.0);
    slots_.push_back(std::move(slot));
  }
}

void AdamW::accumulate(const GradientMap& grads, double scale) {
  for (auto& slot : slots_) {
    const Tensor& g = grads.at(slot.param);
    const double* gv = g.data().data();
    for (std::size_t i = 0; i < slot.accum.size(); ++i) {
      slot.accum[i] += scale * gv[i];
    }
  }
}

void AdamW::step(double lr_pre, double lr_new) {
  ++steps_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  for (auto& slot : slots_) {
    const double lr = slot.is_new ? lr_new : lr_pre;
    double* p = slot.param.raw_data().data();
    for (std::size_t i = 0; i < slot.accum.size(); ++i) {
      const double g = slot.accum[i];
      slot.m[i] = config_.beta1 * slot.m[i] + (1.0 - config_.beta1) * g;
      slot.v[i] = config_.beta2 * slot.v[i] + (1.0 - config_.beta2) * g * g;
      const double m_hat = slot.m[i] / bc1;
      const double v_hat = slot.v[i] / bc2;
      p[i] -= lr * (m_hat / (std::sqrt(v_hat) + config_.eps) +
                    config_.weight_decay * p[i]);
      slot.accum[i] = 0.0;
    }
  }
}

namespace {

// Deterministic epoch-shuffled example order.
class ExampleSampler {
 public:
  ExampleSampler(std::size_t n, std::uint64_t seed)
      : n_(n), rng_(Rng::stream(seed, "data/order")) {
    reshuffle();
  }

  std::size_t next() {
    if (cursor_ == order_.size()) reshuffle();
    return order_[cursor_++];
  }

 private:
  void reshuffle() {
    order_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) order_[i] = i;
    for (std::size_t i = n_ - 1; i > 0; --i) {
      std::swap(order_[i], order_[rng_.below(i + 1)]);
    }
    cursor_ = 0;
  }

  std::size_t n_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

// Per-teacher soft-target rows for every example, reconciled to the student
// vocabulary. Teachers are frozen, so this is computed once per run.
class SoftTargetTable {
 public:
  SoftTargetTable(const SupervisionPlan& plan, const TeacherLadder* ladder,
                  const Dataset& data, std::size_t student_vocab,
                  bool precompute)
      : ladder_(ladder), student_vocab_(student_vocab) {
    if (!ladder_ || !precompute) return;
    for (const auto& sup : plan.per_iteration) {
      if (!sup.teacher || rows_.count(*sup.teacher)) continue;
      auto& rows = rows_[*sup.teacher];
      rows.reserve(data.examples.size());
      for (const auto& ex : data.examples) {
        rows.push_back(compute_rows(*sup.teacher, ex));
      }
    }
  }

  std::optional<Distribution> targets(std::optional<std::size_t> teacher,
                                      const Example& example,
                                      std::size_t example_index) const {
    if (!teacher) return std::nullopt;
    const std::size_t n = example.tokens.size() - 1;
    auto it = rows_.find(*teacher);
    std::vector<double> rows;
    if (it != rows_.end()) {
      rows = it->second.at(example_index);
    } else {
      rows = compute_rows(*teacher, example);
    }
    return Distribution::from_probs(
        Tensor::from({n, student_vocab_}, std::move(rows)));
  }

 private:
  std::vector<double> compute_rows(std::size_t teacher_idx,
                                   const Example& example) const {
    const Transformer& teacher = ladder_->teacher(teacher_idx);
    const std::span<const int> input(example.tokens.data(),
                                     example.tokens.size() - 1);
    Distribution q;
    if (teacher.config().vocab_size == student_vocab_) {
      q = soft_targets(teacher, input);
    } else {
      q = truncate_renormalize(teacher.forward_logits(input), student_vocab_);
    }
    const auto span = q.probs().data();
    return {span.begin(), span.end()};
  }

  const TeacherLadder* ladder_;
  std::size_t student_vocab_;
  std::unordered_map<std::size_t, std::vector<std::vector<double>>> rows_;
};

void assert_ladder_frozen(const TeacherLadder* ladder) {
  if (!ladder) return;
  for (std::size_t i = 0; i < ladder->size(); ++i) {
    if (!ladder->teacher(i).frozen()) {
      throw std::invalid_argument("training: teacher " + std::to_string(i) +
                                  " is not frozen");
    }
    for (const auto& e : ladder->teacher(i).params().entries()) {
      if (e.tensor.requires_grad()) {
        throw std::invalid_argument("training: teacher parameter '" + e.name +
                                    "' still tracks gradients");
      }
    }
  }
}

std::string nan_diagnostics(std::size_t step, const SupervisionPlan& plan,
                            const std::vector<LossBreakdown>& breakdown) {
  std::ostringstream os;
  os << "training diverged: non-finite loss at step " << step << "; per-step (λ, kl, ce):";
  for (std::size_t i = 0; i < breakdown.size(); ++i) {
    os << " [t=" << i + 1 << " λ=" << plan.per_iteration[i].lambda
       << " kl=" << breakdown[i].kl << " ce=" << breakdown[i].ce << "]";
  }
  return os.str();
}

using ForwardFn = std::function<std::vector<Tensor>(std::span<const int>)>;

TrainResult run_training_loop(const ForwardFn& forward, ParameterStore& params,
                              const SupervisionPlan& plan, const Dataset& data,
                              const TeacherLadder* ladder,
                              OptimizerSchedule schedule,
                              const TrainOptions& options, std::uint64_t seed,
                              bool supervise_all_positions) {
  plan.validate(ladder ? ladder->size() : 0);
  assert_ladder_frozen(ladder);
  if (data.examples.empty()) {
    throw std::invalid_argument("training: empty dataset");
  }

  const std::size_t batch = options.batch_size == 0 ? 1 : options.batch_size;
  const std::size_t micro =
      options.micro_batch == 0 ? batch : std::min(options.micro_batch, batch);
  std::size_t total_steps = options.total_steps;
  if (total_steps == 0) {
    const double steps_per_epoch =
        static_cast<double>(data.examples.size()) / static_cast<double>(batch);
    total_steps = static_cast<std::size_t>(
        std::ceil(options.epochs * steps_per_epoch));
  }
  if (schedule.total_steps == 0) schedule.total_steps = total_steps;

  TrainResult result;
  if (total_steps == 0) return result;

  // Teachers are frozen, so soft targets are a pure function of the data.
  std::size_t student_vocab = 0;
  {
    const std::vector<Tensor> probe = forward(std::span<const int>(
        data.examples.front().tokens.data(),
        data.examples.front().tokens.size() - 1));
    student_vocab = probe.back().cols();
  }
  SoftTargetTable targets(plan, ladder, data, student_vocab,
                          options.precompute_soft_targets);

  AdamW optimizer(params, options.adamw);
  ExampleSampler sampler(data.examples.size(), seed);

  std::ofstream log;
  if (!options.log_path.empty()) {
    log.open(options.log_path, std::ios::trunc);
    if (!log) {
      throw std::runtime_error("training: cannot write log at " + options.log_path);
    }
  }

  const auto param_tensors = params.tensors();
  const double inv_batch = 1.0 / static_cast<double>(batch);

  for (std::size_t step = 0; step < total_steps; ++step) {
    std::vector<std::size_t> picks(batch);
    for (auto& p : picks) p = sampler.next();

    StepRecord record;
    record.step = step;
    record.kl.assign(plan.per_iteration.size(), 0.0);
    record.ce.assign(plan.per_iteration.size(), 0.0);

    std::size_t consumed = 0;
    while (consumed < batch) {
      const std::size_t count = std::min(micro, batch - consumed);
      Tensor micro_loss;
      for (std::size_t i = 0; i < count; ++i) {
        const Example& ex = data.examples[picks[consumed + i]];
        TrainingBatch tb = TrainingBatch::next_token(ex);
        if (supervise_all_positions) {
          std::fill(tb.mask.begin(), tb.mask.end(), 1);
        }
        const std::vector<Tensor> logits = forward(tb.input);
        std::vector<std::optional<Distribution>> qs;
        for (const auto& sup : plan.per_iteration) {
          qs.push_back(targets.targets(sup.teacher, ex, picks[consumed + i]));
        }
        TotalLoss loss = total_loss(logits, plan, tb, qs);
        for (std::size_t t = 0; t < loss.per_step.size(); ++t) {
          record.kl[t] += loss.per_step[t].kl * inv_batch;
          record.ce[t] += loss.per_step[t].ce * inv_batch;
        }
        micro_loss = micro_loss.defined() ? add(micro_loss, loss.value) : loss.value;
      }
      optimizer.accumulate(grad(micro_loss, param_tensors), inv_batch);
      record.total += micro_loss.item() * inv_batch;
      consumed += count;
    }

    if (!std::isfinite(record.total)) {
      std::vector<LossBreakdown> bd(plan.per_iteration.size());
      for (std::size_t t = 0; t < bd.size(); ++t) {
        bd[t].kl = record.kl[t];
        bd[t].ce = record.ce[t];
      }
      throw std::runtime_error(nan_diagnostics(step, plan, bd) +
                               " (seed " + std::to_string(seed) + ")");
    }

    record.lr_pre = schedule.lr_pre_at(step);
    record.lr_new = schedule.lr_new_at(step);
    optimizer.step(record.lr_pre, record.lr_new);

#ifndef NDEBUG
    if (ladder) {
      for (std::size_t i = 0; i < ladder->size(); ++i) {
        for (const auto& e : ladder->teacher(i).params().entries()) {
          assert(!e.tensor.requires_grad());
        }
      }
    }
#endif

    if (log.is_open()) {
      nlohmann::json j{{"step", record.step}, {"kl", record.kl},
                       {"ce", record.ce},     {"total", record.total},
                       {"lr_pre", record.lr_pre}, {"lr_new", record.lr_new}};
      log << j.dump() << '\n';
    }
    result.trajectory.push_back(std::move(record));
  }

  result.steps = result.trajectory.size();
  result.final_loss = result.trajectory.back().total;
  return result;
}

}  // namespace

TrainResult train_scout(ScoutModel& model, const SupervisionPlan& plan,
                        const Dataset& data, const TeacherLadder* ladder,
                        OptimizerSchedule schedule, const TrainOptions& options,
                        std::uint64_t seed) {
  if (!plan_is_recursive(plan.mode)) {
    throw std::invalid_argument("train_scout: " + plan_mode_name(plan.mode) +
                                " trains the plain stack; use train_backbone");
  }
  if (plan.per_iteration.size() != model.config().num_iterations) {
    throw std::invalid_argument("train_scout: plan supervises " +
                                std::to_string(plan.per_iteration.size()) +
                                " iterations but the model runs " +
                                std::to_string(model.config().num_iterations));
  }
  const ForwardFn forward = [&model](std::span<const int> tokens) {
    return model.forward_flow(tokens).per_step_logits;
  };
  return run_training_loop(forward, model.params(), plan, data, ladder, schedule,
                           options, seed, /*supervise_all_positions=*/false);
}

TrainResult train_backbone(Transformer& model, const SupervisionPlan& plan,
                           const Dataset& data, const TeacherLadder* ladder,
                           OptimizerSchedule schedule, const TrainOptions& options,
                           std::uint64_t seed) {
  if (plan_is_recursive(plan.mode)) {
    throw std::invalid_argument("train_backbone: " + plan_mode_name(plan.mode) +
                                " requires the recursive model; use train_scout");
  }
  const ForwardFn forward = [&model](std::span<const int> tokens) {
    return std::vector<Tensor>{model.forward_logits(tokens)};
  };
  return run_training_loop(forward, model.params(), plan, data, ladder, schedule,
                           options, seed, /*supervise_all_positions=*/false);
}

TrainResult pretrain_backbone(Transformer& model, const Dataset& data,
                              std::size_t budget_steps, double learning_rate,
                              const TrainOptions& options, std::uint64_t seed) {
  if (budget_steps == 0) return {};  // random init passthrough
  SupervisionPlan plan;
  plan.mode = PlanMode::SFT;
  plan.per_iteration = {{std::nullopt, 1.0, 1.0}};
  OptimizerSchedule schedule;
  schedule.lr_pretrained = learning_rate;
  schedule.total_steps = budget_steps;
  TrainOptions opts = options;
  opts.total_steps = budget_steps;
  const ForwardFn forward = [&model](std::span<const int> tokens) {
    return std::vector<Tensor>{model.forward_logits(tokens)};
  };
  return run_training_loop(forward, model.params(), plan, data, nullptr, schedule,
                           opts, seed, /*supervise_all_positions=*/true);
}

}  // namespace scout
