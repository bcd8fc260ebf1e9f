#include "cowp/baselines.hpp"

#include <algorithm>
#include <sstream>

#include <json.hpp>

#include "cowp/util.hpp"

namespace cowp::baselines {

using json = nlohmann::json;
using controller::OutcomeKind;

namespace {

Outcome finish(const sim::World& world, OutcomeKind kind, std::string detail,
               std::vector<pddl::KnowledgePatch> patches = {}) {
  Outcome out;
  out.kind = kind;
  out.detail = std::move(detail);
  out.trace = world.trace();
  out.patches = std::move(patches);
  return out;
}

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

Outcome cw_run(const sim::TaskBundle& task, sim::World& world, const planner::SearchOptions& search) {
  while (!world.goal_satisfied()) {
    auto p = planner::plan(task.domain, world.observed_problem(), search);
    if (!p) return finish(world, OutcomeKind::kNoSolution, "no plan from the observed state");
    try {
      world.execute(p->steps.front());
    } catch (const sim::ExecutionFailure& e) {
      return finish(world, OutcomeKind::kExecutionFailure, e.what());
    }
  }
  return finish(world, OutcomeKind::kCompleted, "");
}

// ---------------------------------------------------------------------------

EkStore EkStore::from_json_text(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("EK store is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || doc.value("schema_version", 0) != kSchemaVersion)
    throw std::runtime_error("EK store: unsupported or missing schema_version");
  EkStore store;
  for (const auto& r : doc.at("rules"))
    store.add(Rule{r.at("task"), r.at("predicate"), r.at("object"), r.at("action"), r.at("param")});
  for (const auto& s : doc.at("substitutes"))
    store.add(Substitute{s.at("task"), s.at("replaces"), s.at("kind"), s.at("action"), s.at("literal")});
  return store;
}

EkStore EkStore::load(const std::filesystem::path& path) { return from_json_text(read_text(path)); }

std::set<std::string> ek_coverage(const sim::ObjectLibrary& library, std::uint64_t seed) {
  std::vector<std::string> kinds;
  for (const auto& e : library.entries()) kinds.push_back(e.name);
  Rng rng(seed);
  rng.shuffle(kinds);
  kinds.resize(kinds.size() / 2);
  return {kinds.begin(), kinds.end()};
}

Outcome ek_run(const sim::TaskBundle& task, sim::World& world, const EkStore& store,
               const std::set<std::string>& coverage, const planner::SearchOptions& search) {
  pddl::Domain domain = task.domain;
  std::vector<pddl::KnowledgePatch> patches;
  std::optional<sim::SituationReport> situation;
  bool substituted = false;
  auto add_patch = [&](pddl::KnowledgePatch patch) {
    if (pddl::has_patch(domain, patch)) return;
    domain = pddl::apply_patch(domain, patch);
    patches.push_back(std::move(patch));
  };

  while (!world.goal_satisfied()) {
    auto p = planner::plan(domain, world.observed_problem(), search);
    if (!p && situation && !substituted) {
      substituted = true;
      const auto touched = situation->objects();
      for (const auto& s : store.substitutes()) {
        if (s.task != task.name || !touched.contains(s.replaces) || !coverage.contains(s.kind)) continue;
        const std::string obj = sim::spawned_object_name(s.kind);
        auto it = world.problem().objects.find(obj);
        if (it == world.problem().objects.end()) continue;
        pddl::Atom atom = pddl::parse_literal(s.literal).atom;
        std::replace(atom.args.begin(), atom.args.end(), std::string("?o"), obj);
        add_patch({pddl::PatchKind::kAddEffect, s.action, {atom, true}, {{obj, it->second}}});
      }
      p = planner::plan(domain, world.observed_problem(), search);
    }
    if (!p) return finish(world, OutcomeKind::kNoSolution, "no plan from the observed state", patches);

    std::optional<sim::SituationReport> report;
    try {
      report = world.execute(p->steps.front());
    } catch (const sim::ExecutionFailure& e) {
      return finish(world, OutcomeKind::kExecutionFailure, e.what(), patches);
    }
    if (!report) continue;
    situation = report;
    for (const auto& atom : report->added) {
      if (atom.args.size() != 1 || !coverage.contains(task.kind_of(atom.args[0]))) continue;
      for (const auto& r : store.rules())
        if (r.task == task.name && r.predicate == atom.predicate && r.object == atom.args[0])
          add_patch({pddl::PatchKind::kAddPrecondition, r.action, {{atom.predicate, {r.param}}, false}, {}});
    }
  }
  return finish(world, OutcomeKind::kCompleted, "", patches);
}

// ---------------------------------------------------------------------------

ScriptedProposer::ScriptedProposer(std::vector<std::string> proposals, std::size_t offset)
    : proposals_(std::move(proposals)), offset_(offset) {
  if (proposals_.empty()) throw std::invalid_argument("scripted proposer needs at least one proposal");
}

std::string ScriptedProposer::propose(std::size_t attempt) {
  return proposals_[(offset_ + attempt) % proposals_.size()];
}

std::vector<std::string> load_proposals(const std::filesystem::path& path) {
  std::istringstream in(read_text(path));
  std::vector<std::string> out;
  std::string current, line;
  auto flush = [&] {
    if (!current.empty()) out.push_back(current);
    current.clear();
  };
  while (std::getline(in, line)) {
    std::string t = trim(line);
    if (t.starts_with(';')) continue;
    if (t.empty()) {
      flush();
      continue;
    }
    current += t + "\n";
  }
  flush();
  return out;
}

LlmProposer::LlmProposer(oracle::LlmConfig config, std::shared_ptr<oracle::CompletionTransport> transport,
                         std::string prompt)
    : config_(std::move(config)), transport_(std::move(transport)), prompt_(std::move(prompt)) {}

std::string LlmProposer::propose(std::size_t attempt) {
  // Decoding is greedy, so attempts differ only through the prompt.
  return transport_->complete(prompt_ + "\nAttempt " + std::to_string(attempt + 1) + ":\n", config_);
}

std::string LlmProposer::prompt_for(const sim::TaskBundle& task, const sim::World& world) {
  std::ostringstream out;
  out << "Write a robot plan for " << task.task_phrase << ", one step per line as (action arg ...).\n";
  out << "Actions:";
  for (const auto& a : task.domain.actions) {
    out << " (" << a.name;
    for (const auto& p : a.params) out << ' ' << p.name;
    out << ')';
  }
  out << "\nObjects:";
  for (const auto& [name, type] : world.problem().objects) out << ' ' << name;
  return out.str();
}

std::optional<std::vector<ProposedStep>> parse_proposal(std::string_view text) {
  std::vector<ProposedStep> steps;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    std::string t = trim(line);
    if (t.empty() || t.starts_with(';')) continue;
    if (t[0] == 'S' || t[0] == 's') {
      auto colon = t.find(':');
      if (colon == std::string::npos) return std::nullopt;
      t = trim(std::string_view(t).substr(colon + 1));
    }
    if (t.size() < 3 || t.front() != '(' || t.back() != ')') return std::nullopt;
    std::istringstream words(t.substr(1, t.size() - 2));
    ProposedStep step;
    if (!(words >> step.name)) return std::nullopt;
    step.name = pddl::lowercase(step.name);
    for (std::string w; words >> w;) step.args.push_back(pddl::lowercase(w));
    steps.push_back(std::move(step));
  }
  if (steps.empty()) return std::nullopt;
  return steps;
}

bool grounded(const std::vector<ProposedStep>& steps, const sim::TaskBundle& task, const sim::World& world) {
  return std::all_of(steps.begin(), steps.end(), [&](const ProposedStep& s) {
    return task.domain.action(s.name) != nullptr &&
           std::all_of(s.args.begin(), s.args.end(),
                       [&](const std::string& a) { return world.problem().objects.contains(a); });
  });
}

Outcome lm_run(const sim::TaskBundle& task, sim::World& world, Proposer& proposer, std::size_t max_attempts) {
  if (max_attempts < 1) throw std::invalid_argument("lm_max_attempts must be at least 1");
  for (std::size_t attempt = 0; attempt < max_attempts; ++attempt) {
    auto steps = parse_proposal(proposer.propose(attempt));
    if (!steps || !grounded(*steps, task, world)) continue;
    Outcome out;
    for (const auto& s : *steps) {
      try {
        world.execute(pddl::GroundAction{s.name, s.args, {}, {}, {}});
      } catch (const sim::ExecutionFailure& e) {
        out = finish(world, OutcomeKind::kExecutionFailure, e.what());
        out.attempts = attempt + 1;
        return out;
      }
    }
    out = world.goal_satisfied() ? finish(world, OutcomeKind::kCompleted, "")
                                 : finish(world, OutcomeKind::kExecutionFailure, "plan ended short of the goal");
    out.attempts = attempt + 1;
    return out;
  }
  Outcome out = finish(world, OutcomeKind::kNoSolution,
                       "no grounded proposal in " + std::to_string(max_attempts) + " attempts");
  out.attempts = max_attempts;
  return out;
}

}  // namespace cowp::baselines
