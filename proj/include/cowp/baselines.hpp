#pragma once

// Comparison planners: closed world (CW), external knowledge (EK) and a
// language-model plan proposer (LM).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "cowp/cowp.hpp"
#include "cowp/oracle.hpp"
#include "cowp/simworld.hpp"

namespace cowp::baselines {

using controller::Outcome;

enum class Kind { kCW, kEK, kLM };

struct BaselineConfig {
  Kind kind = Kind::kCW;
  std::uint64_t ek_coverage_seed = 0;
  std::size_t lm_max_attempts = 100;
};

/// Replans from the observed state before every step; never asks an oracle.
Outcome cw_run(const sim::TaskBundle& task, sim::World& world, const planner::SearchOptions& search = {});

// ---------------------------------------------------------------------------

/// Static store of situation rules and substitution effects. A rule fires
/// only when the situation object's kind is covered, a substitute only when
/// its own kind is.
class EkStore {
 public:
  struct Rule {
    std::string task;
    std::string predicate;
    std::string object;
    std::string action;
    std::string param;
  };
  struct Substitute {
    std::string task;
    std::string replaces;
    std::string kind;
    std::string action;
    std::string literal;  // over ?o
  };

  static constexpr int kSchemaVersion = 1;

  static EkStore from_json_text(std::string_view text);
  static EkStore load(const std::filesystem::path& path);

  const std::vector<Rule>& rules() const { return rules_; }
  const std::vector<Substitute>& substitutes() const { return substitutes_; }
  void add(Rule r) { rules_.push_back(std::move(r)); }
  void add(Substitute s) { substitutes_.push_back(std::move(s)); }

 private:
  std::vector<Rule> rules_;
  std::vector<Substitute> substitutes_;
};

/// Exactly half of the library's kinds, chosen by `seed`.
std::set<std::string> ek_coverage(const sim::ObjectLibrary& library, std::uint64_t seed);

Outcome ek_run(const sim::TaskBundle& task, sim::World& world, const EkStore& store,
               const std::set<std::string>& coverage, const planner::SearchOptions& search = {});

// ---------------------------------------------------------------------------

class Proposer {
 public:
  virtual ~Proposer() = default;
  /// Plan text for the given 0-based attempt.
  virtual std::string propose(std::size_t attempt) = 0;
};

/// Cycles through a fixed list starting at `offset`.
class ScriptedProposer : public Proposer {
 public:
  ScriptedProposer(std::vector<std::string> proposals, std::size_t offset = 0);
  std::string propose(std::size_t attempt) override;

 private:
  std::vector<std::string> proposals_;
  std::size_t offset_;
};

/// Blank-line separated proposals; lines starting with ';' are comments.
std::vector<std::string> load_proposals(const std::filesystem::path& path);

/// Asks a completion service for a plan.
class LlmProposer : public Proposer {
 public:
  LlmProposer(oracle::LlmConfig config, std::shared_ptr<oracle::CompletionTransport> transport,
              std::string prompt);
  std::string propose(std::size_t attempt) override;

  /// Task phrase, available objects and action names in one request.
  static std::string prompt_for(const sim::TaskBundle& task, const sim::World& world);

 private:
  oracle::LlmConfig config_;
  std::shared_ptr<oracle::CompletionTransport> transport_;
  std::string prompt_;
};

struct ProposedStep {
  std::string name;
  std::vector<std::string> args;
};

/// "(name a b)" per line, optionally "S1:"-prefixed. Nullopt if any line is
/// not of that shape or the text has no steps.
std::optional<std::vector<ProposedStep>> parse_proposal(std::string_view text);

/// Every action is declared and every argument is an object of this trial.
bool grounded(const std::vector<ProposedStep>& steps, const sim::TaskBundle& task, const sim::World& world);

/// Executes the first grounded proposal blindly. Outcome::attempts counts
/// the proposals drawn.
Outcome lm_run(const sim::TaskBundle& task, sim::World& world, Proposer& proposer, std::size_t max_attempts);

}  // namespace cowp::baselines
