#include <doctest.h>

#include <algorithm>

#include "cowp/simworld.hpp"
#include "cowp/util.hpp"
#include "support.hpp"

using namespace cowp;
using cowp::testing::data_dir;

namespace {

const sim::ObjectLibrary& library() {
  static const sim::ObjectLibrary lib = sim::ObjectLibrary::load(data_dir() / "objects.json");
  return lib;
}

const sim::TaskBundle& bundle(const std::string& name) {
  static std::map<std::string, sim::TaskBundle> cache;
  auto it = cache.find(name);
  if (it == cache.end()) it = cache.emplace(name, sim::load_task(data_dir(), name)).first;
  return it->second;
}

sim::SituationRecord record(const std::string& task, std::size_t step, std::vector<std::string> add,
                            std::vector<std::string> remove, std::string description = "something happened") {
  sim::SituationRecord r;
  r.id = "fixture";
  r.task = task;
  r.step_index = step;
  r.description = std::move(description);
  r.category = "fixture";
  for (const auto& a : add) r.add.push_back(pddl::parse_literal(a).atom);
  for (const auto& a : remove) r.remove.push_back(pddl::parse_literal(a).atom);
  return r;
}

}  // namespace

TEST_CASE("object library has 86 category-tagged kinds") {
  const auto& lib = library();
  CHECK(lib.size() == sim::kLibrarySize);
  auto counts = lib.category_counts();
  CHECK(counts.size() == 5);
  CHECK(counts["utensil"] == 29);
  CHECK(counts["appliance"] == 15);
  CHECK(counts["furniture"] == 16);
  CHECK(counts["food"] == 18);
  CHECK(counts["beverage"] == 8);
  for (const auto& [cat, n] : counts) {
    CHECK(n <= counts["utensil"]);
    CHECK(n >= counts["beverage"]);
  }
  CHECK(lib.category_of("chopping_board") == "utensil");
  CHECK_THROWS_AS(lib.category_of("spaceship"), sim::SimError);
}

TEST_CASE("object library rejects duplicates and unknown categories") {
  CHECK_THROWS_AS(sim::ObjectLibrary::from_json_text(
                      R"({"schema_version":1,"objects":[{"name":"cup","category":"utensil"},{"name":"cup","category":"utensil"}]})"),
                  sim::SimError);
  CHECK_THROWS_AS(sim::ObjectLibrary::from_json_text(
                      R"({"schema_version":1,"objects":[{"name":"cup","category":"tool"}]})"),
                  sim::SimError);
  CHECK_THROWS_AS(sim::ObjectLibrary::from_json_text(R"({"objects":[]})"), sim::SimError);
}

TEST_CASE("bundled tasks load with reference plans") {
  // Reference lengths were confirmed optimal with the breadth-first oracle
  // when the fixtures were written; the planner must keep finding them.
  const std::map<std::string, std::size_t> lengths{{"drinking_water", 10},  {"setting_table", 15},
                                                   {"drinking_coke", 11},   {"preparing_burger", 12},
                                                   {"cleaning_floor", 7},   {"washing_plate", 9}};
  for (const auto& name : sim::task_names()) {
    CAPTURE(name);
    const auto& t = bundle(name);
    CHECK(t.reference_plan.cost() == lengths.at(name));
    CHECK(planner::validate(t.reference_plan, t.domain, t.problem));
    CHECK(planner::validate(t.reference_plan, t.physics(), t.problem));
    for (const auto& k : t.required_kinds) CHECK(library().contains(k));
    for (const auto& g : t.optional)
      for (const auto& k : g.kinds) CHECK(library().contains(k));
    for (const auto& [obj, kind] : t.bindings) CHECK(t.kind_of(obj) == kind);
  }
  CHECK_THROWS_AS(sim::load_task(data_dir(), "juggling"), sim::SimError);
}

TEST_CASE("short reference plans are optimal") {
  for (const std::string name : {"drinking_water", "cleaning_floor", "washing_plate"}) {
    CAPTURE(name);
    const auto& t = bundle(name);
    auto best = planner::bfs_oracle(t.domain, t.problem, t.reference_plan.cost());
    REQUIRE(best.has_value());
    CHECK(best->cost() == t.reference_plan.cost());
  }
}

TEST_CASE("physics drops knowledge preconditions only") {
  const auto& t = bundle("drinking_water");
  auto phys = t.physics();
  const auto* fill = phys.action("fill");
  REQUIRE(fill);
  for (const auto& l : fill->precondition) CHECK(l.atom.predicate != "drinkware");
  CHECK(fill->precondition.size() + 1 == t.domain.action("fill")->precondition.size());
  CHECK(t.kind_of("bowl_0") == "bowl");
  CHECK(t.kind_of("rob").empty());
}

TEST_CASE("spawn picks exactly half the library, deterministically") {
  for (const auto& name : sim::task_names()) {
    CAPTURE(name);
    const auto& t = bundle(name);
    for (std::uint64_t seed : {1ULL, 2ULL, 77ULL, 123456789ULL}) {
      auto w = sim::World::spawn(library(), t, seed);
      CHECK(w.spawned().size() == sim::kSpawnCount);
      CHECK(std::is_sorted(w.spawned().begin(), w.spawned().end()));
      for (const auto& k : t.required_kinds) CHECK(w.is_spawned(k));
      auto again = sim::World::spawn(library(), t, seed);
      CHECK(again.spawned() == w.spawned());
      CHECK(again.state() == w.state());
      CHECK(again.problem() == w.problem());
      // optional objects exist exactly for spawned optional kinds
      for (const auto& g : t.optional)
        for (const auto& k : g.kinds)
          CHECK(w.problem().objects.contains(sim::spawned_object_name(k)) == w.is_spawned(k));
      // atoms mention fixed problem objects or spawned ones only
      for (const auto& atom : w.state())
        for (const auto& o : atom.args) {
          std::string kind = t.kind_of(o);
          CHECK((t.problem.objects.contains(o) || w.is_spawned(kind)));
        }
    }
    CHECK(sim::World::spawn(library(), t, 1).spawned() != sim::World::spawn(library(), t, 2).spawned());
  }
}

TEST_CASE("world without situations follows STRIPS semantics") {
  for (const auto& name : sim::task_names()) {
    CAPTURE(name);
    const auto& t = bundle(name);
    auto phys = t.physics();
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      auto w = sim::World::spawn(library(), t, seed);
      pddl::State s = w.state();
      for (const auto& step : t.reference_plan.steps) {
        auto report = w.execute(step);
        CHECK_FALSE(report.has_value());
        s = pddl::apply(s, pddl::instantiate(phys, w.problem(), step.name, step.args));
        CHECK(w.state() == s);
      }
      CHECK(w.goal_satisfied());
      CHECK(w.trace() == t.reference_plan.steps);
    }
  }
}

TEST_CASE("injected situation fires once, at its step") {
  const auto& t = bundle("drinking_water");
  const auto& plan = t.reference_plan.steps;

  SUBCASE("faucet has no water at step 4") {
    auto w = sim::World::spawn(library(), t, 9);
    w.inject(record("drinking_water", 4, {"(no_water faucet_0)"}, {"(has_water faucet_0)"},
                    "faucet has no water"),
             plan.size());
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK_FALSE(w.execute(plan[i]).has_value());
      CHECK(w.state().contains(pddl::parse_literal("(has_water faucet_0)").atom));
    }
    auto report = w.execute(plan[3]);
    REQUIRE(report.has_value());
    CHECK(report->description == "faucet has no water");
    CHECK_FALSE(w.state().contains(pddl::parse_literal("(has_water faucet_0)").atom));
    CHECK(w.state().contains(pddl::parse_literal("(no_water faucet_0)").atom));
    CHECK(w.situation_step() == 4u);
    CHECK(w.situation_applied());
    CHECK_FALSE(w.execute(plan[4]).has_value());
  }

  SUBCASE("cup is broken at step 5") {
    auto w = sim::World::spawn(library(), t, 9);
    w.inject(record("drinking_water", 5, {"(broken cup_1)"}, {}, "the cup is broken"), plan.size());
    for (std::size_t i = 0; i < 4; ++i) CHECK_FALSE(w.execute(plan[i]).has_value());
    CHECK_FALSE(w.state().contains(pddl::parse_literal("(broken cup_1)").atom));
    CHECK(w.execute(plan[4]).has_value());
    CHECK(w.state().contains(pddl::parse_literal("(broken cup_1)").atom));
  }

  SUBCASE("empty delta still reports its description") {
    auto w = sim::World::spawn(library(), t, 9);
    auto ref = sim::World::spawn(library(), t, 9);
    w.inject(record("drinking_water", 2, {}, {}, "the cup is wet"), plan.size());
    CHECK_FALSE(w.execute(plan[0]).has_value());
    auto report = w.execute(plan[1]);
    ref.execute(plan[0]);
    ref.execute(plan[1]);
    REQUIRE(report.has_value());
    CHECK(report->description == "the cup is wet");
    CHECK(report->added.empty());
    CHECK(w.state() == ref.state());
  }

  SUBCASE("steps past the plan are clamped to its last step") {
    auto w = sim::World::spawn(library(), t, 9);
    w.inject(record("drinking_water", 40, {"(dirty table_0)"}, {}), plan.size());
    CHECK(w.situation_step() == plan.size());
    int reports = 0;
    for (const auto& s : plan) reports += w.execute(s).has_value();
    CHECK(reports == 1);
  }

  SUBCASE("a missing cup makes holding it fail") {
    auto w = sim::World::spawn(library(), t, 9);
    w.inject(record("drinking_water", 2, {"(missing cup_1)"}, {"(cup_at cup_1 kitchen)"}), plan.size());
    w.execute(plan[0]);
    CHECK(w.execute(plan[1]).has_value());
    REQUIRE(plan[2].name == "hold");
    CHECK_THROWS_AS(w.execute(plan[2]), sim::ExecutionFailure);
  }

  SUBCASE("bad injections") {
    auto w = sim::World::spawn(library(), t, 9);
    CHECK_THROWS_AS(w.inject(record("washing_plate", 1, {}, {}), plan.size()), sim::SimError);
    CHECK_THROWS_AS(w.inject(record("drinking_water", 1, {"(broken spaceship_0)"}, {}), plan.size()),
                    sim::SimError);
    CHECK_THROWS_AS(w.inject(record("drinking_water", 1, {"(sparkly cup_1)"}, {}), plan.size()),
                    sim::SimError);
  }
}

TEST_CASE("unknown actions and objects are execution failures") {
  const auto& t = bundle("drinking_water");
  auto w = sim::World::spawn(library(), t, 3);
  pddl::GroundAction fly{"fly", {"rob"}, {}, {}, {}};
  CHECK_THROWS_AS(w.execute(fly), sim::ExecutionFailure);
  pddl::GroundAction ghost{"find_cup", {"rob", "mug_7", "dining"}, {}, {}, {}};
  CHECK_THROWS_AS(w.execute(ghost), sim::ExecutionFailure);
}

TEST_CASE("patched effects are carried into the world state") {
  const auto& t = bundle("drinking_water");
  auto w = sim::World::spawn(library(), t, 3);
  auto a = pddl::instantiate(t.domain, w.problem(), "walk", {"rob", "dining", "kitchen"});
  a.add_effects.push_back(pddl::parse_literal("(drinkware cup_1)").atom);
  w.execute(a);
  CHECK(w.state().contains(pddl::parse_literal("(drinkware cup_1)").atom));
}

// ---------------------------------------------------------------------------
// Dataset.

TEST_CASE("bundled dataset spec generates 561 situations") {
  auto spec = sim::DatasetSpec::load(data_dir() / "dataset_spec.json");
  auto ds = sim::generate_dataset(spec, spec.seed);
  auto stats = ds.stats();
  CHECK(stats.total() == 561);
  CHECK(stats.counts.size() == 6);
  for (const auto& [task, cats] : stats.counts) {
    CAPTURE(task);
    std::size_t n = 0;
    for (const auto& [_, k] : cats) n += k;
    CHECK(n >= 92);
    CHECK(cats.size() >= 16);
    CHECK(cats.size() <= 27);
  }
  CHECK(sim::generate_dataset(spec, spec.seed).to_json() == ds.to_json());
  CHECK(sim::generate_dataset(spec, spec.seed + 1).to_json() != ds.to_json());

  // The committed file is exactly the generator's output.
  auto committed = sim::SituationDataset::load(data_dir() / "situations.json");
  CHECK(committed.to_json() == ds.to_json());
}

TEST_CASE("dataset records fit their task bundles") {
  auto ds = sim::SituationDataset::load(data_dir() / "situations.json");
  auto seeds = sim::SituationDataset::load(data_dir() / "seed_situations.json");
  std::vector<sim::SituationRecord> all = ds.records();
  all.insert(all.end(), seeds.records().begin(), seeds.records().end());
  for (const auto& r : all) {
    CAPTURE(r.id);
    const auto& t = bundle(r.task);
    CHECK(r.step_index >= 1);
    CHECK(r.step_index <= t.reference_plan.cost());
    for (const auto& b : r.blocks) CHECK(t.domain.action(b) != nullptr);
    if (!r.object.empty()) CHECK(t.problem.objects.contains(r.object));
    auto w = sim::World::spawn(library(), t, 5);
    CHECK_NOTHROW(w.inject(r, t.reference_plan.cost()));
    // Under physics the reference plan may break after the delta, but the
    // report comes exactly once and never before its step.
    int reports = 0;
    for (const auto& s : t.reference_plan.steps) {
      std::optional<sim::SituationReport> rep;
      try {
        rep = w.execute(s);
      } catch (const sim::ExecutionFailure&) {
        break;
      }
      if (rep) {
        ++reports;
        CHECK(w.steps_executed() == r.step_index);
      }
    }
    CHECK(reports == 1);
  }
}

TEST_CASE("dataset generator enforces its invariants") {
  sim::DatasetSpec spec;
  sim::TaskSpec ts{"drinking_water", 92, {}};
  ts.categories.push_back({"only", "cup_1", "cup", 1.0, {1}, {"the cup is odd"}, {}, {}, {}});
  spec.tasks.push_back(ts);
  CHECK_THROWS_AS(sim::generate_dataset(spec, 1), sim::SimError);

  spec.category_bounds = {1, 27};
  auto ds = sim::generate_dataset(spec, 1);
  CHECK(ds.records().size() == 92);
  CHECK(ds.stats().counts["drinking_water"].size() == 1);
  CHECK_THROWS_AS(ds.check(92, {16, 27}), sim::SimError);

  spec.tasks[0].count = 50;
  CHECK_THROWS_AS(sim::generate_dataset(spec, 1), sim::SimError);
  spec.tasks[0].count = 92;
  spec.tasks[0].categories[0].steps = {0};
  CHECK_THROWS_AS(sim::generate_dataset(spec, 1), sim::SimError);
}

TEST_CASE("dataset files round-trip and reject bad records") {
  auto ds = sim::SituationDataset::load(data_dir() / "seed_situations.json");
  CHECK(sim::SituationDataset::from_json_text(ds.to_json()).records() == ds.records());
  const auto* occupied = ds.find("seed-occupied-cup");
  REQUIRE(occupied);
  CHECK(occupied->step_index == 2);
  CHECK(occupied->description == "the cup is occupied with a fork, a knife, and a spoon");
  CHECK(ds.find("nope") == nullptr);
  CHECK_THROWS_AS(sim::SituationDataset::from_json_text(R"({"schema_version":2,"records":[]})"), sim::SimError);
  CHECK_THROWS_AS(sim::SituationDataset::from_json_text(
                      R"({"schema_version":1,"records":[{"id":"a","task":"t","step_index":0,"description":"d","category":"c"}]})"),
                  sim::SimError);
}

TEST_CASE("statistics report is machine-readable") {
  auto ds = sim::SituationDataset::load(data_dir() / "situations.json");
  auto text = ds.stats().to_json();
  CHECK(text.find("\"total\": 561") != std::string::npos);
  CHECK(text.find("\"distinct_categories\": 17") != std::string::npos);
}
