#pragma once

// The open-world controller: plan, monitor the remaining plan against the
// observed situation, patch the domain with commonsense knowledge, replan.

#include <cstddef>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cowp/oracle.hpp"
#include "cowp/pddl.hpp"
#include "cowp/planner.hpp"
#include "cowp/simworld.hpp"

namespace cowp::controller {

class ControllerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// No situation atom can be turned into a precondition of the flagged action.
class UnmappableSituation : public ControllerError {
 public:
  using ControllerError::ControllerError;
};

class PatchBudgetExceeded : public ControllerError {
 public:
  using ControllerError::ControllerError;
};

/// Template 3 picked an object that no candidate plan uses.
class SelectionError : public ControllerError {
 public:
  using ControllerError::ControllerError;
};

struct TranscriptEntry {
  std::string kind;    // plan, situation, T1, T2, T3, patch, note
  std::string text;    // prompt, patch, plan listing or message
  std::string answer;  // raw answer text, for queries

  bool operator==(const TranscriptEntry&) const = default;
};

enum class OutcomeKind { kCompleted, kNoSolution, kExecutionFailure };
std::string_view outcome_name(OutcomeKind kind);

struct Outcome {
  OutcomeKind kind = OutcomeKind::kNoSolution;
  std::vector<pddl::GroundAction> trace;
  std::vector<pddl::KnowledgePatch> patches;
  std::vector<TranscriptEntry> transcript;
  std::size_t queries = 0;   // backend calls
  std::size_t attempts = 0;  // plan proposals tried (LM)
  std::string detail;

  bool completed() const { return kind == OutcomeKind::kCompleted; }
  /// Ordered JSON log of the trial: outcome, trace, patches, transcript.
  std::string to_json() const;
};

/// One trial's access to the oracle: records every backend call in order and
/// caches answers so a prompt is asked at most once per trial.
class Session {
 public:
  explicit Session(const oracle::Backend& backend) : backend_(backend) {}

  oracle::OracleVerdict ask(oracle::TemplateId id, const std::string& prompt);
  void note(std::string kind, std::string text);

  const std::vector<TranscriptEntry>& transcript() const { return transcript_; }
  std::vector<TranscriptEntry> take_transcript() { return std::move(transcript_); }
  std::size_t queries() const { return queries_; }

 private:
  const oracle::Backend& backend_;
  std::vector<TranscriptEntry> transcript_;
  std::map<std::string, oracle::OracleVerdict> cache_;
  std::size_t queries_ = 0;
};

struct MonitorResult {
  std::optional<std::size_t> infeasible;  // index into the plan
  oracle::OracleVerdict verdict;

  bool feasible() const { return !infeasible; }
};

/// Asks Template 1 for plan steps [from, end) in order; stops at the first
/// "no". An empty situation is feasible without any query.
MonitorResult monitor(const planner::Plan& plan, std::size_t from, const sim::SituationReport& situation,
                      const oracle::PhraseTable& phrases, Session& session);

/// AddPrecondition patch that rules out the situation for the flagged action.
/// The task's precondition map is consulted first; otherwise a situation atom
/// over the action's own arguments is negated onto the action itself.
pddl::KnowledgePatch derive_precondition(const pddl::Domain& domain, const pddl::Problem& problem,
                                         const pddl::GroundAction& action,
                                         const sim::SituationReport& situation,
                                         const std::vector<sim::PreconditionRule>& rules);

struct EffectCandidate {
  std::string object;
  const sim::EffectEntry* entry = nullptr;
  pddl::KnowledgePatch patch;
  std::optional<planner::Plan> plan;
};

/// Template 2 over every present substitute for the objects the situation
/// touches, in lexicographic object order. Each "yes" becomes an AddEffect
/// candidate. Objects already usable are skipped.
std::vector<EffectCandidate> acquire_effects(const pddl::Domain& domain, const pddl::Problem& problem,
                                             const sim::TaskBundle& task,
                                             const sim::SituationReport& situation, Session& session);

/// Index of the candidate Template 3 prefers; a single candidate is returned
/// without asking.
std::size_t select_best(const std::vector<EffectCandidate>& candidates, Session& session);

struct Options {
  std::size_t patch_cap = 50;
  planner::SearchOptions search;
};

/// Runs one trial to completion. Throws PatchBudgetExceeded,
/// UnmappableSituation, SelectionError and backend errors.
Outcome run(const sim::TaskBundle& task, sim::World& world, const oracle::Backend& backend,
            const Options& options = {});

}  // namespace cowp::controller
