#pragma once
// Per-iteration evaluation, delta reporting against a baseline, token-level
// heatmap export, and inference-time early stopping.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "scout/model.hpp"
#include "scout/tasks.hpp"

namespace scout {

struct EvalReport {
  std::string task;
  std::string split;
  std::string mechanism;   // metadata, may be empty for backbone models
  std::string plan;
  std::string partition;
  std::uint64_t seed = 0;
  std::vector<double> per_iteration_accuracy;
  double average = 0.0;
  // Filled by delta_vs_baseline.
  std::string baseline_name;
  std::vector<double> deltas;
  double delta_average = 0.0;
  bool has_baseline = false;
};

// Greedy decoding driven by one fixed iteration's logits: the prompt grows by
// the argmax token until eos or max_new tokens. iteration is 1-based.
std::vector<int> greedy_decode(const ScoutModel& model, std::span<const int> prompt,
                               std::size_t iteration, std::size_t max_new,
                               int eos_token);
std::vector<int> greedy_decode(const Transformer& model, std::span<const int> prompt,
                               std::size_t max_new, int eos_token);

// Exact-match accuracy of the answer span, once per iteration.
EvalReport evaluate_per_iteration(const ScoutModel& model, const Dataset& data);
// Single-pass counterpart for SFT/DSFT checkpoints (one accuracy entry).
EvalReport evaluate_backbone(const Transformer& model, const Dataset& data);

// Signed per-iteration and average differences, self − baseline, computed on
// the stored full-precision values. A length-1 baseline (sft/dsft) broadcasts.
// Task or split mismatch is an error.
void delta_vs_baseline(EvalReport& report, const EvalReport& baseline);

// CSV with a fixed column order (see README); the JSON twin carries full
// precision.
std::string report_to_csv(const EvalReport& report);
std::string report_to_json(const EvalReport& report);
EvalReport report_from_json_file(const std::filesystem::path& path);
void write_report(const std::filesystem::path& dir, const std::string& stem,
                  const EvalReport& report);

struct HeatmapRecord {
  std::string prompt;
  std::vector<int> candidates;
  // One row per iteration: probability of each candidate, then the "other"
  // bucket; probabilities come from the full-vocabulary softmax so every row
  // sums to 1.
  std::vector<std::vector<double>> rows;
};

HeatmapRecord token_heatmap(const ScoutModel& model, std::span<const int> prompt,
                            std::span<const int> candidates);
std::string heatmap_to_csv(const HeatmapRecord& record);

enum class StopPolicy { None, Entropy, Consistency };

StopPolicy stop_policy_from_name(std::string_view name);

struct EarlyStopResult {
  std::vector<int> output;          // greedy decode of the stopping iteration
  std::size_t stop_iteration = 0;   // 1-based
};

// Entropy policy stops at the first iteration whose next-token entropy falls
// below the threshold; consistency stops when KL(p_t ‖ p_{t-1}) of the
// next-token distributions falls below it (t ≥ 2). Policy none runs all T.
EarlyStopResult early_stop_infer(const ScoutModel& model,
                                 std::span<const int> prompt, StopPolicy policy,
                                 double threshold, std::size_t max_new,
                                 int eos_token);

}  // namespace scout
