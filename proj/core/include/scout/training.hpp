#pragma once
// Supervision plans for every baseline, the per-step and total losses, the
// two-group AdamW optimizer with cosine warmup schedule, and the training
// loops for both the plain backbone and the recursive model.
//
// Per-step objective: L_t = KL(q_t ‖ p_t) + α·CE(p_t, y*), with the KL term
// absent for hard-label-only plans. Total: L = Σ_t λ_t·L_t. Losses average
// over unmasked positions and over the batch.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "scout/model.hpp"
#include "scout/teachers.hpp"

namespace scout {

enum class PlanMode { SFT, DSFT, RSft, RDistillEq, RDistillWt, RScout, Scout };

inline constexpr PlanMode kAllPlanModes[] = {
    PlanMode::SFT,        PlanMode::DSFT,       PlanMode::RSft,
    PlanMode::RDistillEq, PlanMode::RDistillWt, PlanMode::RScout,
    PlanMode::Scout};

// Config names: sft, dsft, r_sft, r_distill_eq, r_distill_wt, r_scout, scout.
PlanMode plan_mode_from_name(std::string_view name);
std::string plan_mode_name(PlanMode mode);
// SFT and DSFT train the unpartitioned stack with a single decoding.
bool plan_is_recursive(PlanMode mode);

struct IterationSupervision {
  std::optional<std::size_t> teacher;  // ladder index, absent → hard labels only
  double lambda = 1.0;
  double alpha = 0.5;
};

struct SupervisionPlan {
  PlanMode mode = PlanMode::SFT;
  std::vector<IterationSupervision> per_iteration;  // length T, or 1 for SFT/DSFT

  void validate(std::size_t ladder_size) const;
};

// Baseline plans:
//   sft           final output only, hard labels (α=1), no teacher
//   dsft          final output only, strongest teacher + α
//   r_sft         every iteration, hard labels (α=1), λ=1/T
//   r_distill_eq  every iteration, strongest teacher, λ=1/T
//   r_distill_wt  strongest teacher, λ=(0.2,0.3,0.5) at T=3 (∝t otherwise)
//   scout         teacher t = ladder[t], ascending; λ=1/T
//   r_scout       scout with the teacher order reversed
SupervisionPlan make_plan(PlanMode mode, const TeacherLadder& ladder,
                          std::size_t iterations, double alpha = 0.5);

// One sequence's next-token view: input x, targets y*, and the per-position
// loss mask (answer span only).
struct TrainingBatch {
  std::vector<int> input;
  std::vector<int> targets;
  std::vector<std::uint8_t> mask;

  static TrainingBatch next_token(const Example& example);
  void validate() const;
  std::size_t active_positions() const;
};

struct LossBreakdown {
  double kl = 0.0;
  double ce = 0.0;
  double total = 0.0;
};

struct PerStepLoss {
  Tensor value;  // scalar, differentiable
  LossBreakdown breakdown;
};

// KL term is zero when q is null. Rejects all-masked batches.
PerStepLoss per_step_loss(const Distribution& p, const Distribution* q,
                          const TrainingBatch& batch, double alpha);

struct TotalLoss {
  Tensor value;
  std::vector<LossBreakdown> per_step;
};

// Weighted sum over supervised iterations; `targets` holds one optional
// teacher distribution per supervised iteration. Rejects an all-zero λ.
TotalLoss total_loss(const std::vector<Tensor>& per_step_logits,
                     const SupervisionPlan& plan, const TrainingBatch& batch,
                     const std::vector<std::optional<Distribution>>& targets);
// Convenience: computes teacher targets directly from the ladder.
TotalLoss total_loss(const StepOutputs& outputs, const SupervisionPlan& plan,
                     const TrainingBatch& batch, const TeacherLadder& ladder);

struct OptimizerSchedule {
  double lr_pretrained = 2e-5;
  double lr_new_multiplier = 2.0;  // lr_new = 2·lr_pre by default
  double warmup_fraction = 0.10;
  std::size_t total_steps = 0;

  std::size_t warmup_steps() const;
  // 0 at step 0, 1 at the end of warmup, cosine back to 0 at total_steps.
  double factor(std::size_t step) const;
  double lr_pre_at(std::size_t step) const { return lr_pretrained * factor(step); }
  double lr_new_at(std::size_t step) const {
    return lr_pretrained * lr_new_multiplier * factor(step);
  }
};

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Decoupled-weight-decay Adam over a parameter store, with separate learning
// rates for pretrained and newly introduced parameters.
class AdamW {
 public:
  AdamW(const ParameterStore& params, AdamWConfig config);
  // Adds scale × grads into the accumulation buffer (gradient accumulation).
  void accumulate(const GradientMap& grads, double scale);
  void step(double lr_pre, double lr_new);
  std::size_t steps_taken() const { return steps_; }

 private:
  struct Slot {
    Tensor param;
    bool is_new;
    std::vector<double> m, v, accum;
  };
  std::vector<Slot> slots_;
  AdamWConfig config_;
  std::size_t steps_ = 0;
};

struct TrainOptions {
  std::size_t batch_size = 32;   // effective batch
  std::size_t micro_batch = 0;   // 0 → batch_size (no accumulation)
  std::size_t total_steps = 0;   // optimizer steps; 0 → derive from epochs
  double epochs = 2.0;
  AdamWConfig adamw;
  bool precompute_soft_targets = true;
  std::string log_path;  // JSONL training log, empty → no file
};

struct StepRecord {
  std::size_t step = 0;
  std::vector<double> kl;  // per supervised iteration
  std::vector<double> ce;
  double total = 0.0;
  double lr_pre = 0.0;
  double lr_new = 0.0;
};

struct TrainResult {
  std::vector<StepRecord> trajectory;
  double final_loss = 0.0;
  std::size_t steps = 0;
};

// Fine-tunes the recursive model under a recursive plan. The ladder may be
// null for hard-label-only plans. NaN loss aborts with the step and λ
// breakdown in the report.
TrainResult train_scout(ScoutModel& model, const SupervisionPlan& plan,
                        const Dataset& data, const TeacherLadder* ladder,
                        OptimizerSchedule schedule, const TrainOptions& options,
                        std::uint64_t seed);

// SFT / DSFT / pretraining path: single-decoding training of the plain stack.
TrainResult train_backbone(Transformer& model, const SupervisionPlan& plan,
                           const Dataset& data, const TeacherLadder* ladder,
                           OptimizerSchedule schedule, const TrainOptions& options,
                           std::uint64_t seed);

// Next-token CE over the whole sequence (mask ignored): the "pretrained"
// starting point that fine-tuning begins from. budget_steps 0 returns the
// model untouched.
TrainResult pretrain_backbone(Transformer& model, const Dataset& data,
                              std::size_t budget_steps, double learning_rate,
                              const TrainOptions& options, std::uint64_t seed);

}  // namespace scout
