#pragma once

// Seeded experiment matrices (method x task x trial), label-based
// adjudication and success-rate aggregation.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cowp/baselines.hpp"
#include "cowp/cowp.hpp"
#include "cowp/oracle.hpp"
#include "cowp/simworld.hpp"

namespace cowp::eval {

class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Method { kCowp, kCw, kEk, kLm };
std::string_view method_name(Method m);
Method method_from_name(std::string_view name);

enum class Label { kValid, kInvalid };

/// (task, category, resolution) -> label. Lookup falls back to
/// (task, category, *), (task, *, resolution), then (*, *, resolution).
class GroundTruthLabels {
 public:
  static constexpr int kSchemaVersion = 1;

  static GroundTruthLabels from_json_text(std::string_view text);
  static GroundTruthLabels load(const std::filesystem::path& path);

  void set(std::string task, std::string category, std::string resolution, Label label);
  std::optional<Label> find(std::string_view task, std::string_view category, std::string_view resolution) const;
  /// Throws EvalError naming the key when no entry applies.
  Label at(std::string_view task, std::string_view category, std::string_view resolution) const;
  std::size_t size() const { return entries_.size(); }

 private:
  std::map<std::string, Label> entries_;  // "task|category|resolution"
};

/// How a trial dealt with its situation: "none" (never observed), "unhandled"
/// (a blocked action still used the situation object afterwards) or
/// "avoided", plus "substitute:<kind>" for every optional object in the trace.
std::vector<std::string> resolution(const std::vector<pddl::GroundAction>& trace,
                                    const sim::SituationRecord* situation,
                                    std::optional<std::size_t> situation_step, const sim::TaskBundle& task);

/// Success iff the run completed with the goal satisfied and every resolution
/// key is labeled valid. Non-completed outcomes never consult the labels.
bool adjudicate(const controller::Outcome& outcome, bool goal_satisfied, const std::vector<std::string>& keys,
                std::string_view task, std::string_view category, const GroundTruthLabels& labels);

struct ExperimentConfig {
  std::vector<std::string> tasks;
  std::vector<Method> methods{Method::kCowp, Method::kCw, Method::kEk, Method::kLm};
  std::size_t trials_per_task = 150;
  std::uint64_t master_seed = 0;
  std::filesystem::path data_dir;
  std::filesystem::path dataset;
  std::filesystem::path labels;
  std::filesystem::path kb;
  std::filesystem::path ek_store;
  std::string backend = "scripted";  // scripted | llm
  std::filesystem::path cassette;    // llm only; replayed unless record is set
  bool record = false;
  oracle::LlmConfig llm;
  std::size_t lm_max_attempts = 100;
  std::size_t patch_cap = 50;
  std::size_t workers = 0;  // 0: one per hardware thread

  /// Relative paths are resolved against `base_dir`. Throws EvalError.
  static ExperimentConfig from_json_text(std::string_view text, const std::filesystem::path& base_dir);
  static ExperimentConfig load(const std::filesystem::path& path);
};

/// Everything a trial reads; loaded once and shared read-only by workers.
struct Resources {
  sim::ObjectLibrary library;
  std::map<std::string, sim::TaskBundle> tasks;
  sim::SituationDataset dataset;
  GroundTruthLabels labels;
  std::shared_ptr<const oracle::Backend> backend;
  std::shared_ptr<oracle::CompletionTransport> transport;  // llm only
  oracle::LlmConfig llm;
  baselines::EkStore ek_store;
  std::map<std::string, std::vector<std::string>> proposals;
  std::size_t lm_max_attempts = 100;
  std::size_t patch_cap = 50;

  static Resources load(const ExperimentConfig& config);
  const sim::TaskBundle& task(std::string_view name) const;
};

std::uint64_t trial_seed(std::uint64_t master_seed, std::string_view task, std::size_t trial);
const sim::SituationRecord& sample_situation(const sim::SituationDataset& dataset, std::string_view task,
                                             std::uint64_t seed);

struct TrialResult {
  std::string task;
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  Method method = Method::kCowp;
  std::string situation;
  std::string category;
  std::string object;  // situation kind
  std::string outcome;  // outcome name or "error"
  bool success = false;
  std::string resolution;  // keys joined with '+'
  std::size_t patches = 0;
  std::size_t queries = 0;
  std::size_t attempts = 0;
  std::size_t steps = 0;
  std::string error;
  double wall_seconds = 0;  // sidecar only
};

/// One method on one trial. Module errors land in TrialResult::error. When
/// `outcome` is given it receives the full run record.
TrialResult run_trial(const Resources& res, std::string_view task, std::size_t trial, std::uint64_t seed,
                      const sim::SituationRecord& situation, Method method,
                      controller::Outcome* outcome = nullptr);

/// Results ordered by task, trial, method (config order), whatever the
/// completion order of the worker pool.
std::vector<TrialResult> run_experiment(const ExperimentConfig& config, const Resources& res);
std::vector<TrialResult> run_experiment(const ExperimentConfig& config);

enum class GroupBy { kTask, kObject };
GroupBy group_by_from_name(std::string_view name);

struct AggregateRow {
  std::string group;
  Method method;
  std::size_t successes = 0;
  std::size_t n = 0;
  double rate() const { return n ? static_cast<double>(successes) / static_cast<double>(n) : 0.0; }
};

/// Rows ordered by group then method; empty groups do not appear.
std::vector<AggregateRow> aggregate(const std::vector<TrialResult>& results, GroupBy by);

inline constexpr int kResultsSchemaVersion = 1;

std::string results_csv(const std::vector<TrialResult>& results);
std::string summary_json(const std::vector<TrialResult>& results);
std::string timings_log(const std::vector<TrialResult>& results);
/// Group x method rate table for terminals.
std::string format_table(const std::vector<AggregateRow>& rows);

/// results.csv, summary.json and the timings.log sidecar.
void write_outputs(const std::vector<TrialResult>& results, const std::filesystem::path& out_dir);

}  // namespace cowp::eval
