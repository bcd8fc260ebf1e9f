#pragma once

// Dining-domain world simulator: the object library, task bundles, per-trial
// spawning, situation injection and step execution, plus the situation
// dataset and its seeded generator.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cowp/oracle.hpp"
#include "cowp/pddl.hpp"
#include "cowp/planner.hpp"

namespace cowp::sim {

class SimError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The world refused an action: it is not applicable under the physics model.
class ExecutionFailure : public SimError {
 public:
  using SimError::SimError;
};

inline constexpr std::size_t kLibrarySize = 86;
inline constexpr std::size_t kSpawnCount = kLibrarySize / 2;

struct LibraryEntry {
  std::string name;
  std::string category;  // utensil, appliance, furniture, food, beverage
};

class ObjectLibrary {
 public:
  static const std::vector<std::string>& categories();

  static ObjectLibrary from_json_text(std::string_view text);
  static ObjectLibrary load(const std::filesystem::path& path);

  const std::vector<LibraryEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool contains(std::string_view kind) const;
  const std::string& category_of(std::string_view kind) const;
  std::map<std::string, std::size_t> category_counts() const;

 private:
  std::vector<LibraryEntry> entries_;
};

// ---------------------------------------------------------------------------
// Task bundles.

/// Library kinds that may appear in a trial as "<kind>_0" objects.
struct OptionalGroup {
  std::vector<std::string> kinds;
  std::string type;
  std::vector<std::string> init;  // atoms over ?o
};

/// Situation atom (predicate over an object or an object type) -> the action
/// whose precondition gains the negated atom, bound at `param`.
struct PreconditionRule {
  std::string predicate;
  std::string object;  // exact object, or
  std::string type;    // any object of this type
  std::string action;
  std::string param;
};

/// Template 2 effect schema: substitutes for one of the `replaces` objects
/// become usable once `action` also adds `literal` (over ?o) for them.
struct EffectEntry {
  std::vector<std::string> replaces;
  std::string action;
  std::string literal;
  std::vector<std::string> kinds;
  std::string query_action;
  std::string query_connective = "to";
  std::string query_preposition = "with";
  std::string task;  // Template 3 task phrase
};

struct TaskBundle {
  static constexpr int kSchemaVersion = 1;

  std::string name;
  std::string task_phrase;
  pddl::Domain domain;
  pddl::Problem problem;
  std::vector<std::string> required_kinds;
  std::map<std::string, std::string> bindings;  // problem object -> library kind
  std::set<std::string> knowledge_predicates;
  std::vector<OptionalGroup> optional;
  oracle::PhraseTable phrases;
  std::vector<PreconditionRule> precondition_map;
  std::vector<EffectEntry> effect_table;
  planner::Plan reference_plan;

  /// The task domain without knowledge preconditions: what the world itself
  /// enforces.
  pddl::Domain physics() const;
  /// Library kind of a problem object ("bowl_0" -> "bowl"), or "" if none.
  std::string kind_of(std::string_view object) const;
  const OptionalGroup* group_of(std::string_view kind) const;
};

/// Reads <data_dir>/tasks/<name>/{domain.pddl, problem.pddl, task.json} and
/// plans the reference plan. Throws SimError if anything is missing or
/// inconsistent.
TaskBundle load_task(const std::filesystem::path& data_dir, std::string_view name);

/// The bundled task names in their canonical order.
const std::vector<std::string>& task_names();

/// "bowl" -> "bowl_0".
std::string spawned_object_name(std::string_view kind);

// ---------------------------------------------------------------------------
// Situations.

struct SituationRecord {
  std::string id;
  std::string task;
  std::size_t step_index = 1;
  std::string description;
  std::string category;
  std::string object;  // situation object (may be empty for scene-level ones)
  std::string kind;    // object label used for per-object aggregation
  std::vector<pddl::Atom> add;
  std::vector<pddl::Atom> remove;
  std::vector<std::string> blocks;  // actions that misuse the object

  bool operator==(const SituationRecord&) const = default;
};

struct SituationReport {
  std::string description;
  std::vector<pddl::Atom> added;
  std::vector<pddl::Atom> removed;

  bool empty() const { return description.empty() && added.empty() && removed.empty(); }
  /// Objects named by any added or removed atom.
  std::set<std::string> objects() const;
};

struct DatasetStats {
  std::map<std::string, std::map<std::string, std::size_t>> counts;  // task -> category -> n
  std::size_t total() const;
  std::string to_json() const;
};

class SituationDataset {
 public:
  static constexpr int kSchemaVersion = 1;

  SituationDataset() = default;
  explicit SituationDataset(std::vector<SituationRecord> records);

  static SituationDataset from_json_text(std::string_view text);
  static SituationDataset load(const std::filesystem::path& path);
  std::string to_json() const;

  const std::vector<SituationRecord>& records() const { return records_; }
  std::vector<const SituationRecord*> for_task(std::string_view task) const;
  const SituationRecord* find(std::string_view id) const;
  DatasetStats stats() const;

  /// Throws SimError unless every task present has at least `min_per_task`
  /// records and a category count within [lo, hi].
  void check(std::size_t min_per_task, std::pair<std::size_t, std::size_t> category_bounds) const;

 private:
  std::vector<SituationRecord> records_;
};

struct CategorySpec {
  std::string name;
  std::string object;
  std::string kind;
  double weight = 1.0;
  std::vector<std::size_t> steps;
  std::vector<std::string> descriptions;
  std::vector<pddl::Atom> add;
  std::vector<pddl::Atom> remove;
  std::vector<std::string> blocks;
};

struct TaskSpec {
  std::string task;
  std::size_t count = 0;
  std::vector<CategorySpec> categories;
};

struct DatasetSpec {
  std::uint64_t seed = 0;
  std::size_t min_per_task = 92;
  std::pair<std::size_t, std::size_t> category_bounds{16, 27};
  std::vector<TaskSpec> tasks;

  static DatasetSpec from_json_text(std::string_view text);
  static DatasetSpec load(const std::filesystem::path& path);
};

/// Every category appears at least once; the remaining records are drawn by
/// weight. Throws SimError if the spec's targets violate the dataset
/// invariants.
SituationDataset generate_dataset(const DatasetSpec& spec, std::uint64_t seed);

// ---------------------------------------------------------------------------
// World.

class World {
 public:
  /// Half of the library, always including the task's required kinds.
  static World spawn(const ObjectLibrary& library, const TaskBundle& task, std::uint64_t seed);

  /// Arms a one-shot situation. Steps past `plan_length` are clamped to it.
  void inject(const SituationRecord& record, std::size_t plan_length);

  /// Executes one step under the physics model plus any extra effects the
  /// caller's (possibly patched) action carries. Returns the situation report
  /// when this step is the injected one. Throws ExecutionFailure.
  std::optional<SituationReport> execute(const pddl::GroundAction& action);

  const pddl::Problem& problem() const { return problem_; }
  const pddl::State& state() const { return state_; }
  pddl::Problem observed_problem() const { return pddl::with_init(problem_, state_); }
  bool goal_satisfied() const { return pddl::satisfies(state_, problem_.goal); }

  const std::vector<std::string>& spawned() const { return spawned_; }  // sorted kinds
  bool is_spawned(std::string_view kind) const;
  const std::vector<pddl::GroundAction>& trace() const { return trace_; }
  std::size_t steps_executed() const { return trace_.size(); }
  std::uint64_t seed() const { return seed_; }

  const std::optional<SituationRecord>& situation() const { return situation_; }
  std::optional<std::size_t> situation_step() const { return situation_step_; }
  bool situation_applied() const { return applied_; }

 private:
  const TaskBundle* task_ = nullptr;
  pddl::Domain physics_;
  pddl::Problem problem_;
  pddl::State state_;
  std::vector<std::string> spawned_;
  std::vector<pddl::GroundAction> trace_;
  std::optional<SituationRecord> situation_;
  std::optional<std::size_t> situation_step_;
  bool applied_ = false;
  std::uint64_t seed_ = 0;
};

}  // namespace cowp::sim
