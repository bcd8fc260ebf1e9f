#include <doctest.h>

#include <cstdio>

#include "cowp/baselines.hpp"
#include "cowp/util.hpp"
#include "support.hpp"

using namespace cowp;
using cowp::testing::data_dir;

namespace {

struct Fixture {
  sim::ObjectLibrary library = sim::ObjectLibrary::load(data_dir() / "objects.json");
  sim::SituationDataset seeds = sim::SituationDataset::load(data_dir() / "seed_situations.json");
  baselines::EkStore store = baselines::EkStore::load(data_dir() / "ek_store.json");
  sim::TaskBundle water = sim::load_task(data_dir(), "drinking_water");
};

const Fixture& fx() {
  static const Fixture f;
  return f;
}

constexpr std::uint64_t kBowlSeed = 5;

sim::World occupied_world(const sim::TaskBundle& t, std::uint64_t seed = kBowlSeed) {
  auto w = sim::World::spawn(fx().library, t, seed);
  w.inject(*fx().seeds.find("seed-occupied-cup"), t.reference_plan.cost());
  return w;
}

const std::string kGoodPlan =
    "(walk rob dining kitchen)\n(find_cup rob cup_1 kitchen)\n(hold rob cup_1 kitchen)\n"
    "(find_faucet rob faucet_0 kitchen)\n(turnon rob faucet_0 kitchen)\n(fill rob cup_1 faucet_0 kitchen)\n"
    "(turnoff rob faucet_0 kitchen)\n(walk rob kitchen dining)\n(place rob cup_1 table_0 dining)\n"
    "(done cup_1 person_1)\n";

class FakeTransport : public oracle::CompletionTransport {
 public:
  std::string complete(const std::string& prompt, const oracle::LlmConfig&) override {
    prompts.push_back(prompt);
    return prompts.size() < 2 ? "I would pour some water." : kGoodPlan;
  }
  std::vector<std::string> prompts;
};

}  // namespace

TEST_CASE("CW follows the reference plan when nothing happens") {
  const auto& t = fx().water;
  auto world = sim::World::spawn(fx().library, t, 3);
  auto out = baselines::cw_run(t, world);
  CHECK(out.completed());
  CHECK(out.trace == t.reference_plan.steps);
  CHECK(out.queries == 0);
}

TEST_CASE("CW replans around a missing cup only when the model knows another cup") {
  const auto& rec = *fx().seeds.find("seed-missing-cup");
  auto t = fx().water;
  {
    auto world = sim::World::spawn(fx().library, t, 3);
    world.inject(rec, t.reference_plan.cost());
    auto out = baselines::cw_run(t, world);
    CHECK(out.kind == controller::OutcomeKind::kNoSolution);
  }
  t.problem.objects.emplace("cup_2", "vessel");
  for (const auto* a : {"(cup_at cup_2 kitchen)", "(cup_is_empty cup_2)", "(drinkware cup_2)"})
    t.problem.init.insert(pddl::parse_literal(a).atom);
  auto world = sim::World::spawn(fx().library, t, 3);
  world.inject(rec, t.reference_plan.cost());
  auto out = baselines::cw_run(t, world);
  REQUIRE(out.completed());
  CHECK(world.goal_satisfied());
  CHECK(out.trace.back().args[0] == "cup_2");
}

TEST_CASE("EK store loads and rejects bad input") {
  CHECK(fx().store.rules().size() > 0);
  CHECK(fx().store.substitutes().size() > 0);
  CHECK_THROWS(baselines::EkStore::from_json_text("{"));
  CHECK_THROWS(baselines::EkStore::from_json_text(R"({"schema_version": 2, "rules": [], "substitutes": []})"));
  CHECK_THROWS(baselines::EkStore::from_json_text(R"({"schema_version": 1, "rules": [{"task": "x"}], "substitutes": []})"));
}

TEST_CASE("EK coverage is half the library and seeded") {
  auto a = baselines::ek_coverage(fx().library, 1);
  auto b = baselines::ek_coverage(fx().library, 1);
  auto c = baselines::ek_coverage(fx().library, 2);
  CHECK(a.size() == 43);
  CHECK(a == b);
  CHECK(a != c);
  for (const auto& k : a) CHECK(fx().library.contains(k));
}

TEST_CASE("EK on the occupied cup depends on what it covers") {
  const auto& t = fx().water;
  {
    auto world = occupied_world(t);
    auto out = baselines::ek_run(t, world, fx().store, {"cup", "bowl"});
    REQUIRE(out.completed());
    REQUIRE(out.patches.size() >= 2);
    CHECK(out.patches[0].str() == "AddPrecondition(fill, (not (occupied ?c)))");
    CHECK(out.patches[1].str() == "AddEffect(find_cup, (drinkware bowl_0))");
    CHECK(out.trace.back().args[0] == "bowl_0");
  }
  {
    auto world = occupied_world(t);
    auto out = baselines::ek_run(t, world, fx().store, {"cup"});
    CHECK(out.kind == controller::OutcomeKind::kNoSolution);
    CHECK(out.patches.size() == 1);
  }
  {
    auto world = occupied_world(t);
    auto out = baselines::ek_run(t, world, fx().store, {"bowl"});
    CHECK(out.completed());
    CHECK(out.patches.empty());
    CHECK(out.trace.back().args[0] == "cup_1");
  }
}

TEST_CASE("property: EK without coverage is CW") {
  const auto dataset = sim::SituationDataset::load(data_dir() / "situations.json");
  std::map<std::string, sim::TaskBundle> tasks;
  for (const auto& n : sim::task_names()) tasks.emplace(n, sim::load_task(data_dir(), n));
  for (std::size_t i = 0; i < dataset.records().size(); i += 7) {
    const auto& rec = dataset.records()[i];
    const auto& t = tasks.at(rec.task);
    CAPTURE(rec.id);
    auto w1 = sim::World::spawn(fx().library, t, i);
    auto w2 = sim::World::spawn(fx().library, t, i);
    w1.inject(rec, t.reference_plan.cost());
    w2.inject(rec, t.reference_plan.cost());
    auto cw = baselines::cw_run(t, w1);
    auto ek = baselines::ek_run(t, w2, fx().store, {});
    CHECK(cw.kind == ek.kind);
    CHECK(cw.trace == ek.trace);
  }
}

TEST_CASE("proposal parsing") {
  auto p = baselines::parse_proposal("S1: (Walk rob dining kitchen)\n\n  S2: (done cup_1 person_1)  \n");
  REQUIRE(p);
  REQUIRE(p->size() == 2);
  CHECK((*p)[0].name == "walk");
  CHECK((*p)[0].args == std::vector<std::string>{"rob", "dining", "kitchen"});
  CHECK(!baselines::parse_proposal(""));
  CHECK(!baselines::parse_proposal("walk to the kitchen"));
  CHECK(!baselines::parse_proposal("(walk rob dining kitchen)\nthen pour"));
  CHECK(!baselines::parse_proposal("()"));

  auto world = sim::World::spawn(fx().library, fx().water, 0);
  CHECK(baselines::grounded(*baselines::parse_proposal(kGoodPlan), fx().water, world));
  CHECK(!baselines::grounded(*baselines::parse_proposal("(teleport rob kitchen)"), fx().water, world));
  CHECK(!baselines::grounded(*baselines::parse_proposal("(hold rob unicorn_0 kitchen)"), fx().water, world));
}

TEST_CASE("proposal files split on blank lines") {
  const auto path = std::filesystem::temp_directory_path() / "cowp_proposals_test.txt";
  write_text(path, "; header\n\n(a x)\n(b y)\n\n\n; note\n(c z)\n");
  auto list = baselines::load_proposals(path);
  std::filesystem::remove(path);
  CHECK(list == std::vector<std::string>{"(a x)\n(b y)\n", "(c z)\n"});

  for (const auto& n : sim::task_names()) {
    CAPTURE(n);
    auto committed = baselines::load_proposals(data_dir() / "tasks" / n / "proposals.txt");
    CHECK(committed.size() >= 4);
  }
}

TEST_CASE("LM executes the first grounded proposal") {
  const auto& t = fx().water;
  {
    auto world = sim::World::spawn(fx().library, t, 0);
    baselines::ScriptedProposer proposer({"pour water", "(hold rob unicorn_0 kitchen)", kGoodPlan});
    auto out = baselines::lm_run(t, world, proposer, 100);
    CHECK(out.completed());
    CHECK(out.attempts == 3);
    CHECK(world.goal_satisfied());
  }
  {
    auto world = sim::World::spawn(fx().library, t, 0);
    baselines::ScriptedProposer proposer({"(hold rob unicorn_0 kitchen)"});
    auto out = baselines::lm_run(t, world, proposer, 100);
    CHECK(out.kind == controller::OutcomeKind::kNoSolution);
    CHECK(out.attempts == 100);
    CHECK(out.trace.empty());
  }
  {
    auto world = sim::World::spawn(fx().library, t, 0);
    baselines::ScriptedProposer proposer({"(walk rob dining kitchen)"});
    auto out = baselines::lm_run(t, world, proposer, 5);
    CHECK(out.kind == controller::OutcomeKind::kExecutionFailure);
    CHECK(out.trace.size() == 1);
  }
  {
    // Blind execution: the occupied cup is filled anyway.
    auto world = occupied_world(t);
    baselines::ScriptedProposer proposer({kGoodPlan});
    auto out = baselines::lm_run(t, world, proposer, 5);
    CHECK(out.completed());
    CHECK(out.attempts == 1);
  }
  {
    auto world = sim::World::spawn(fx().library, t, 0);
    baselines::ScriptedProposer proposer({"(hold rob cup_1 kitchen)"});
    auto out = baselines::lm_run(t, world, proposer, 5);
    CHECK(out.kind == controller::OutcomeKind::kExecutionFailure);
    CHECK(out.trace.empty());
  }
  auto world = sim::World::spawn(fx().library, t, 0);
  baselines::ScriptedProposer proposer({kGoodPlan});
  CHECK_THROWS_AS(baselines::lm_run(t, world, proposer, 0), std::invalid_argument);
  CHECK_THROWS_AS(baselines::ScriptedProposer({}), std::invalid_argument);
}

TEST_CASE("scripted proposer cycles from its offset") {
  baselines::ScriptedProposer p({"a", "b", "c"}, 2);
  CHECK(p.propose(0) == "c");
  CHECK(p.propose(1) == "a");
  CHECK(p.propose(5) == "b");
}

TEST_CASE("LLM proposer varies the prompt by attempt") {
  const auto& t = fx().water;
  auto world = sim::World::spawn(fx().library, t, 0);
  auto transport = std::make_shared<FakeTransport>();
  const auto prompt = baselines::LlmProposer::prompt_for(t, world);
  CHECK(prompt.find("drinking water") != std::string::npos);
  CHECK(prompt.find("cup_1") != std::string::npos);
  CHECK(prompt.find("(fill ") != std::string::npos);
  baselines::LlmProposer proposer({}, transport, prompt);
  auto out = baselines::lm_run(t, world, proposer, 10);
  CHECK(out.completed());
  CHECK(out.attempts == 2);
  REQUIRE(transport->prompts.size() == 2);
  CHECK(transport->prompts[0] != transport->prompts[1]);
}
