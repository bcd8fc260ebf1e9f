#pragma once

// Closed-world task planner: greedy best-first search with the additive
// relaxation heuristic, plus an independent validator and a breadth-first
// reference search used as a testing oracle.

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cowp/pddl.hpp"

namespace cowp::planner {

struct Plan {
  std::vector<pddl::GroundAction> steps;

  std::size_t cost() const { return steps.size(); }
  bool operator==(const Plan&) const = default;
};

/// Empty optional means "no solution": the goal is unreachable.
using PlanOutcome = std::optional<Plan>;

/// Search gave up before proving anything. Never conflated with no-solution.
class BudgetExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SearchOptions {
  std::size_t max_expansions = 1'000'000;
};

PlanOutcome plan(const pddl::Domain& domain, const pddl::Problem& problem,
                 const SearchOptions& options = {});

/// Shortest plan within `depth_limit` steps. Throws BudgetExceeded if the
/// limit cut off unexplored states or more than `max_states` were visited.
PlanOutcome bfs_oracle(const pddl::Domain& domain, const pddl::Problem& problem,
                       std::size_t depth_limit,
                       std::size_t max_states = 1'000'000);

struct ValidationReport {
  bool valid = false;
  std::optional<std::size_t> failed_step;  // 0-based
  std::string reason;
};

/// Re-instantiates every step from `domain` and simulates it from the
/// initial state. Never consults an oracle.
ValidationReport check_plan(const Plan& plan, const pddl::Domain& domain,
                            const pddl::Problem& problem);
bool validate(const Plan& plan, const pddl::Domain& domain,
              const pddl::Problem& problem);

/// One step per line, "(name arg1 arg2 ...)"; with `numbered`, each line is
/// prefixed by "S<k>: ".
std::string format_plan(const Plan& plan, bool numbered = false);

/// Reads the format written by format_plan (either flavor). Blank lines and
/// ';' comments are ignored.
Plan parse_plan(std::string_view text, const pddl::Domain& domain,
                const pddl::Problem& problem);

/// All states reachable from the initial state (exhaustive; testing aid).
std::vector<pddl::State> reachable_states(const pddl::Domain& domain,
                                          const pddl::Problem& problem,
                                          std::size_t max_states = 1'000'000);

}  // namespace cowp::planner
