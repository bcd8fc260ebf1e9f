#include <doctest.h>

#include <random>

#include "cowp/planner.hpp"
#include "support.hpp"

using namespace cowp;
using namespace cowp::planner;

namespace {

const char* kReferencePlan = R"(S1: (walk rob dining kitchen)
S2: (find_faucet rob faucet_0 kitchen)
S3: (find_cup rob cup_1 kitchen)
S4: (hold rob cup_1 kitchen)
S5: (turnon rob faucet_0 kitchen)
S6: (fill rob cup_1 faucet_0 kitchen)
S7: (turnoff rob faucet_0 kitchen)
S8: (walk rob kitchen dining)
S9: (place rob cup_1 table_0 dining)
S10: (done cup_1 person_1)
)";

}  // namespace

TEST_CASE("drinking water fixture") {
  auto d = testing::drinking_water_domain();
  auto p = testing::drinking_water_problem(d);

  SUBCASE("planner output validates and is deterministic") {
    auto outcome = plan(d, p);
    REQUIRE(outcome.has_value());
    CHECK(validate(*outcome, d, p));
    CHECK(outcome->steps.front().str() == "(walk rob dining kitchen)");
    CHECK(outcome->steps.back().str() == "(done cup_1 person_1)");
    CHECK(format_plan(*plan(d, p)) == format_plan(*outcome));
  }
  SUBCASE("breadth-first optimum has ten steps") {
    auto optimal = bfs_oracle(d, p, 20);
    REQUIRE(optimal.has_value());
    CHECK(optimal->cost() == 10);
    CHECK(validate(*optimal, d, p));
    CHECK(optimal->cost() <= plan(d, p)->cost());
  }
  SUBCASE("the reference listing validates and round-trips") {
    Plan listed = parse_plan(kReferencePlan, d, p);
    CHECK(listed.cost() == 10);
    CHECK(validate(listed, d, p));
    CHECK(format_plan(listed, true) == kReferencePlan);
  }
  SUBCASE("holding before finding the cup is rejected at that step") {
    Plan swapped = parse_plan(kReferencePlan, d, p);
    std::swap(swapped.steps[2], swapped.steps[3]);
    auto report = check_plan(swapped, d, p);
    CHECK_FALSE(report.valid);
    REQUIRE(report.failed_step.has_value());
    CHECK(*report.failed_step == 2);
    CHECK(report.reason.find("(cup_found cup_1)") != std::string::npos);
  }
  SUBCASE("holding and turning on the faucet commute") {
    Plan swapped = parse_plan(kReferencePlan, d, p);
    std::swap(swapped.steps[3], swapped.steps[4]);
    CHECK(validate(swapped, d, p));
  }
  SUBCASE("truncated plan misses the goal") {
    Plan partial = parse_plan(kReferencePlan, d, p);
    partial.steps.pop_back();
    auto report = check_plan(partial, d, p);
    CHECK_FALSE(report.valid);
    CHECK_FALSE(report.failed_step.has_value());
  }
  SUBCASE("dirty-cup precondition with every cup dirty has no solution") {
    auto patched = pddl::apply_patch(
        d, {pddl::PatchKind::kAddPrecondition, "fill", pddl::parse_literal("(not (dirty ?c))"), {}});
    auto dirty = p;
    dirty.init.insert({"dirty", {"cup_1"}});
    CHECK_FALSE(plan(patched, dirty).has_value());
    // exhaustive confirmation
    CHECK_FALSE(bfs_oracle(patched, dirty, 1000).has_value());
    CHECK(plan(d, dirty).has_value());
  }
}

TEST_CASE("goal already satisfied gives the empty plan") {
  auto d = testing::drinking_water_domain();
  auto p = testing::drinking_water_problem(d);
  p.goal = {{{"faucet_off", {"faucet_0"}}, true}};
  auto outcome = plan(d, p);
  REQUIRE(outcome.has_value());
  CHECK(outcome->steps.empty());
  CHECK(validate(*outcome, d, p));
  CHECK(bfs_oracle(d, p, 0)->steps.empty());
}

TEST_CASE("unreachable goal on a small universe") {
  auto d = pddl::parse_domain(R"((define (domain d) (:predicates (p) (q))
    (:action a :parameters () :precondition (p) :effect (q))))");
  auto p = pddl::parse_problem("(define (problem x) (:domain d) (:init) (:goal (q)))", d);
  CHECK_FALSE(plan(d, p).has_value());
  CHECK_FALSE(bfs_oracle(d, p, 5).has_value());
}

TEST_CASE("negative goals fall back to breadth-first search") {
  auto d = pddl::parse_domain(R"((define (domain d) (:predicates (p) (q))
    (:action a :parameters () :precondition (p) :effect (and (q) (not (p))))
    (:action b :parameters () :precondition (q) :effect (not (q)))))");
  auto p = pddl::parse_problem("(define (problem x) (:domain d) (:init (p)) (:goal (and (not (p)) (not (q)))))", d);
  auto outcome = plan(d, p);
  REQUIRE(outcome.has_value());
  CHECK(format_plan(*outcome) == "(a)\n(b)\n");
}

TEST_CASE("budgets are reported distinctly") {
  auto d = testing::drinking_water_domain();
  auto p = testing::drinking_water_problem(d);
  CHECK_THROWS_AS(plan(d, p, SearchOptions{3}), BudgetExceeded);
  CHECK_THROWS_AS(bfs_oracle(d, p, 4), BudgetExceeded);
  CHECK_THROWS_AS(bfs_oracle(d, p, 20, 10), BudgetExceeded);
}

TEST_CASE("parse_plan rejects unknown steps") {
  auto d = testing::drinking_water_domain();
  auto p = testing::drinking_water_problem(d);
  CHECK_THROWS_AS(parse_plan("(fly rob)", d, p), pddl::ModelError);
  CHECK_THROWS_AS(parse_plan("(walk rob dining", d, p), pddl::ParseError);
  CHECK_THROWS_AS(parse_plan("(walk rob dining moon)", d, p), pddl::ModelError);
}

TEST_CASE("planner agrees with the breadth-first oracle on random tasks") {
  std::mt19937 rng(2024);
  int solvable = 0;
  for (int i = 0; i < 60; ++i) {
    auto t = testing::random_task(rng);
    auto fast = plan(t.domain, t.problem);
    auto exact = bfs_oracle(t.domain, t.problem, 1u << 12);
    REQUIRE(fast.has_value() == exact.has_value());
    if (fast) {
      ++solvable;
      CHECK(validate(*fast, t.domain, t.problem));
      CHECK(exact->cost() <= fast->cost());
    }
  }
  CHECK(solvable > 0);
  CHECK(solvable < 60);
}

TEST_CASE("effect-only patches keep solvable tasks solvable") {
  std::mt19937 rng(77);
  for (int i = 0; i < 40; ++i) {
    auto t = testing::random_task(rng, 12, false);
    if (!plan(t.domain, t.problem)) continue;
    const auto& action = t.domain.actions[i % t.domain.actions.size()];
    const auto& pred = t.domain.predicates[i % t.domain.predicates.size()];
    pddl::Atom atom{pred.name, {}};
    for (std::size_t k = 0; k < pred.params.size(); ++k) atom.args.push_back(action.params[0].name);
    if (std::find(action.del_effects.begin(), action.del_effects.end(), atom) != action.del_effects.end()) continue;
    auto patched = pddl::apply_patch(t.domain, {pddl::PatchKind::kAddEffect, action.name, {atom, true}, {}});
    auto outcome = plan(patched, t.problem);
    REQUIRE(outcome.has_value());
    CHECK(validate(*outcome, patched, t.problem));
  }
}
