#include "scout/eval.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "scout/distribution.hpp"
#include "scout/ops.hpp"

namespace scout {

namespace {

int argmax_last_row(const Tensor& logits) {
  const std::size_t rows = logits.rows(), cols = logits.cols();
  const double* v = logits.data().data() + (rows - 1) * cols;
  int best = 0;
  for (std::size_t j = 1; j < cols; ++j) {
    if (v[j] > v[static_cast<std::size_t>(best)]) best = static_cast<int>(j);
  }
  return best;
}

// Next-token distribution of each iteration at the prompt's last position.
std::vector<std::vector<double>> next_token_rows(const ScoutModel& model,
                                                 std::span<const int> prompt) {
  const StepOutputs out = model.forward_flow(prompt);
  std::vector<std::vector<double>> rows;
  rows.reserve(out.per_step_logits.size());
  for (const Tensor& logits : out.per_step_logits) {
    const Distribution d = softmax(logits, 1);
    const std::size_t cols = logits.cols();
    const double* last = d.probs().data().data() + (logits.rows() - 1) * cols;
    rows.emplace_back(last, last + cols);
  }
  return rows;
}

}  // namespace

std::vector<int> greedy_decode(const ScoutModel& model, std::span<const int> prompt,
                               std::size_t iteration, std::size_t max_new,
                               int eos_token) {
  if (iteration == 0 || iteration > model.config().num_iterations) {
    throw std::invalid_argument("greedy_decode: iteration " +
                                std::to_string(iteration) + " outside 1.." +
                                std::to_string(model.config().num_iterations));
  }
  std::vector<int> context(prompt.begin(), prompt.end());
  std::vector<int> generated;
  for (std::size_t i = 0; i < max_new; ++i) {
    const StepOutputs out = model.forward_flow(context);
    const int next = argmax_last_row(out.per_step_logits[iteration - 1]);
    generated.push_back(next);
    context.push_back(next);
    if (next == eos_token) break;
  }
  return generated;
}

std::vector<int> greedy_decode(const Transformer& model, std::span<const int> prompt,
                               std::size_t max_new, int eos_token) {
  std::vector<int> context(prompt.begin(), prompt.end());
  std::vector<int> generated;
  for (std::size_t i = 0; i < max_new; ++i) {
    const int next = argmax_last_row(model.forward_logits(context));
    generated.push_back(next);
    context.push_back(next);
    if (next == eos_token) break;
  }
  return generated;
}

namespace {

template <typename DecodeFn>
double exact_match_accuracy(const Dataset& data, DecodeFn&& decode) {
  if (data.examples.empty()) {
    throw std::invalid_argument("evaluate: empty split");
  }
  std::size_t hits = 0;
  for (const auto& ex : data.examples) {
    const std::span<const int> prompt(ex.tokens.data(), ex.answer_begin);
    const std::vector<int> reference(ex.tokens.begin() +
                                         static_cast<std::ptrdiff_t>(ex.answer_begin),
                                     ex.tokens.end());
    const std::vector<int> generated = decode(prompt, reference.size());
    if (generated == reference) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(data.examples.size());
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

EvalReport evaluate_per_iteration(const ScoutModel& model, const Dataset& data) {
  EvalReport report;
  report.task = data.task_name;
  report.split = data.split;
  report.mechanism = mechanism_name(model.mechanism());
  report.partition = partition_case_name(model.partition_case());
  const std::size_t iterations = model.config().num_iterations;
  for (std::size_t t = 1; t <= iterations; ++t) {
    report.per_iteration_accuracy.push_back(exact_match_accuracy(
        data, [&](std::span<const int> prompt, std::size_t max_new) {
          return greedy_decode(model, prompt, t, max_new, vocab::kEos);
        }));
  }
  report.average = mean_of(report.per_iteration_accuracy);
  return report;
}

EvalReport evaluate_backbone(const Transformer& model, const Dataset& data) {
  EvalReport report;
  report.task = data.task_name;
  report.split = data.split;
  report.per_iteration_accuracy.push_back(exact_match_accuracy(
      data, [&](std::span<const int> prompt, std::size_t max_new) {
        return greedy_decode(model, prompt, max_new, vocab::kEos);
      }));
  report.average = report.per_iteration_accuracy.front();
  return report;
}

void delta_vs_baseline(EvalReport& report, const EvalReport& baseline) {
  if (report.task != baseline.task || report.split != baseline.split) {
    throw std::invalid_argument("delta_vs_baseline: task/split mismatch (" +
                                report.task + "/" + report.split + " vs " +
                                baseline.task + "/" + baseline.split + ")");
  }
  const std::size_t n = report.per_iteration_accuracy.size();
  const std::size_t bn = baseline.per_iteration_accuracy.size();
  if (bn != n && bn != 1) {
    throw std::invalid_argument("delta_vs_baseline: baseline reports " +
                                std::to_string(bn) + " iterations, this report " +
                                std::to_string(n));
  }
  report.deltas.clear();
  for (std::size_t i = 0; i < n; ++i) {
    const double base = baseline.per_iteration_accuracy[bn == 1 ? 0 : i];
    report.deltas.push_back(report.per_iteration_accuracy[i] - base);
  }
  report.delta_average = report.average - baseline.average;
  report.baseline_name = baseline.plan.empty() ? "baseline" : baseline.plan;
  report.has_baseline = true;
}

std::string report_to_csv(const EvalReport& report) {
  std::ostringstream os;
  os << "task,split,mechanism,plan,partition,seed,iteration,accuracy";
  if (report.has_baseline) os << ",delta";
  os << '\n';
  os << std::fixed << std::setprecision(4);
  for (std::size_t i = 0; i < report.per_iteration_accuracy.size(); ++i) {
    os << report.task << ',' << report.split << ',' << report.mechanism << ','
       << report.plan << ',' << report.partition << ',' << report.seed << ','
       << (i + 1) << ',' << report.per_iteration_accuracy[i];
    if (report.has_baseline) os << ',' << report.deltas[i];
    os << '\n';
  }
  os << report.task << ',' << report.split << ',' << report.mechanism << ','
     << report.plan << ',' << report.partition << ',' << report.seed
     << ",avg," << report.average;
  if (report.has_baseline) os << ',' << report.delta_average;
  os << '\n';
  return os.str();
}

std::string report_to_json(const EvalReport& report) {
  nlohmann::json j{{"task", report.task},
                   {"split", report.split},
                   {"mechanism", report.mechanism},
                   {"plan", report.plan},
                   {"partition", report.partition},
                   {"seed", report.seed},
                   {"per_iteration_accuracy", report.per_iteration_accuracy},
                   {"average", report.average}};
  if (report.has_baseline) {
    j["baseline"] = report.baseline_name;
    j["deltas"] = report.deltas;
    j["delta_average"] = report.delta_average;
  }
  return j.dump(2);
}

EvalReport report_from_json_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("report: cannot read " + path.string());
  nlohmann::json j;
  is >> j;
  EvalReport report;
  report.task = j.at("task").get<std::string>();
  report.split = j.at("split").get<std::string>();
  report.mechanism = j.value("mechanism", "");
  report.plan = j.value("plan", "");
  report.partition = j.value("partition", "");
  report.seed = j.value("seed", 0ull);
  report.per_iteration_accuracy =
      j.at("per_iteration_accuracy").get<std::vector<double>>();
  report.average = j.at("average").get<double>();
  if (j.contains("deltas")) {
    report.has_baseline = true;
    report.baseline_name = j.value("baseline", "baseline");
    report.deltas = j.at("deltas").get<std::vector<double>>();
    report.delta_average = j.value("delta_average", 0.0);
  }
  return report;
}

void write_report(const std::filesystem::path& dir, const std::string& stem,
                  const EvalReport& report) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream os(dir / (stem + ".csv"));
    if (!os) throw std::runtime_error("report: cannot write " + stem + ".csv");
    os << report_to_csv(report);
  }
  {
    std::ofstream os(dir / (stem + ".json"));
    if (!os) throw std::runtime_error("report: cannot write " + stem + ".json");
    os << report_to_json(report) << '\n';
  }
}

HeatmapRecord token_heatmap(const ScoutModel& model, std::span<const int> prompt,
                            std::span<const int> candidates) {
  const std::size_t vocab = model.config().vocab_size;
  for (int c : candidates) {
    if (c < 0 || static_cast<std::size_t>(c) >= vocab) {
      throw std::out_of_range("token_heatmap: candidate token " +
                              std::to_string(c) + " outside vocabulary");
    }
  }
  HeatmapRecord record;
  record.prompt = vocab::decode(prompt);
  record.candidates.assign(candidates.begin(), candidates.end());
  for (const auto& row : next_token_rows(model, prompt)) {
    std::vector<double> out_row;
    double covered = 0.0;
    for (int c : candidates) {
      const double p = row[static_cast<std::size_t>(c)];
      out_row.push_back(p);
      covered += p;
    }
    out_row.push_back(1.0 - covered);  // "other" bucket over the full vocab
    record.rows.push_back(std::move(out_row));
  }
  return record;
}

std::string heatmap_to_csv(const HeatmapRecord& record) {
  std::ostringstream os;
  os << "iteration";
  for (int c : record.candidates) os << ",p(" << vocab::token_char(c) << ')';
  os << ",p(other)\n";
  os << std::setprecision(10);
  for (std::size_t t = 0; t < record.rows.size(); ++t) {
    os << (t + 1);
    for (double p : record.rows[t]) os << ',' << p;
    os << '\n';
  }
  return os.str();
}

StopPolicy stop_policy_from_name(std::string_view name) {
  if (name == "none") return StopPolicy::None;
  if (name == "entropy") return StopPolicy::Entropy;
  if (name == "consistency") return StopPolicy::Consistency;
  throw std::invalid_argument("unknown early-stop policy '" + std::string(name) +
                              "' (expected none, entropy or consistency)");
}

EarlyStopResult early_stop_infer(const ScoutModel& model,
                                 std::span<const int> prompt, StopPolicy policy,
                                 double threshold, std::size_t max_new,
                                 int eos_token) {
  if (policy != StopPolicy::None && threshold <= 0.0) {
    throw std::invalid_argument("early_stop_infer: threshold must be positive");
  }
  const std::size_t iterations = model.config().num_iterations;
  std::size_t stop = iterations;

  if (policy != StopPolicy::None) {
    const auto rows = next_token_rows(model, prompt);
    for (std::size_t t = 1; t <= iterations; ++t) {
      const auto& row = rows[t - 1];
      if (policy == StopPolicy::Entropy) {
        if (entropy_nats(row) < threshold) {
          stop = t;
          break;
        }
      } else if (t >= 2) {
        const Distribution cur = Distribution::from_probs(
            Tensor::from({row.size()}, std::vector<double>(row)));
        const auto& prev_row = rows[t - 2];
        const Distribution prev = Distribution::from_probs(
            Tensor::from({prev_row.size()}, std::vector<double>(prev_row)));
        if (kl_divergence(cur, prev).item() < threshold) {
          stop = t;
          break;
        }
      }
    }
  }

  EarlyStopResult result;
  result.stop_iteration = stop;
  result.output = greedy_decode(model, prompt, stop, max_new, eos_token);
  return result;
}

}  // namespace scout
