#include "cowp/cowp.hpp"

#include <algorithm>
#include <set>

#include <json.hpp>

namespace cowp::controller {

using json = nlohmann::ordered_json;

std::string_view outcome_name(OutcomeKind kind) {
  switch (kind) {
    case OutcomeKind::kCompleted: return "completed";
    case OutcomeKind::kNoSolution: return "no_solution";
    case OutcomeKind::kExecutionFailure: return "execution_failure";
  }
  return "?";
}

std::string Outcome::to_json() const {
  json doc;
  doc["outcome"] = outcome_name(kind);
  doc["detail"] = detail;
  doc["queries"] = queries;
  doc["attempts"] = attempts;
  json steps = json::array();
  for (const auto& a : trace) steps.push_back(a.str());
  doc["trace"] = steps;
  json ps = json::array();
  for (const auto& p : patches) ps.push_back(p.str());
  doc["patches"] = ps;
  json log = json::array();
  for (const auto& e : transcript) {
    json entry{{"kind", e.kind}, {"text", e.text}};
    if (!e.answer.empty() || e.kind.starts_with("T")) entry["answer"] = e.answer;
    log.push_back(entry);
  }
  doc["transcript"] = log;
  return doc.dump(2) + "\n";
}

oracle::OracleVerdict Session::ask(oracle::TemplateId id, const std::string& prompt) {
  if (auto it = cache_.find(prompt); it != cache_.end()) return it->second;
  oracle::OracleVerdict v = backend_.query(prompt);
  ++queries_;
  transcript_.push_back({std::string(oracle::template_name(id)), prompt, v.raw_text});
  cache_.emplace(prompt, v);
  return v;
}

void Session::note(std::string kind, std::string text) {
  transcript_.push_back({std::move(kind), std::move(text), ""});
}

MonitorResult monitor(const planner::Plan& plan, std::size_t from, const sim::SituationReport& situation,
                      const oracle::PhraseTable& phrases, Session& session) {
  MonitorResult result;
  if (situation.empty()) return result;
  for (std::size_t i = from; i < plan.steps.size(); ++i) {
    const auto& step = plan.steps[i];
    const std::string prompt =
        oracle::render(oracle::TemplateId::kT1, {{"action", phrases.describe(step)},
                                                 {"situation", situation.description},
                                                 {"connective", phrases.at(step.name).connective}});
    auto verdict = session.ask(oracle::TemplateId::kT1, prompt);
    if (verdict.feasible == false) {
      result.infeasible = i;
      result.verdict = std::move(verdict);
      return result;
    }
  }
  return result;
}

pddl::KnowledgePatch derive_precondition(const pddl::Domain& domain, const pddl::Problem& problem,
                                         const pddl::GroundAction& action,
                                         const sim::SituationReport& situation,
                                         const std::vector<sim::PreconditionRule>& rules) {
  if (situation.added.empty())
    throw UnmappableSituation("situation '" + situation.description + "' carries no facts");
  const auto objects = pddl::all_objects(domain, problem);
  auto type_of = [&](const std::string& o) -> std::string {
    auto it = objects.find(o);
    return it == objects.end() ? "" : it->second;
  };

  for (const auto& atom : situation.added) {
    if (atom.args.size() != 1) continue;
    const std::string& arg = atom.args[0];
    for (const auto& r : rules) {
      if (r.predicate != atom.predicate) continue;
      const bool match = r.object.empty() ? domain.is_subtype(type_of(arg), r.type) : r.object == arg;
      if (!match) continue;
      return {pddl::PatchKind::kAddPrecondition, r.action, {{atom.predicate, {r.param}}, false}, {}};
    }
  }

  const auto* schema = domain.action(action.name);
  if (!schema) throw ControllerError("unknown action " + action.name);
  for (const auto& atom : situation.added) {
    pddl::Atom lifted{atom.predicate, {}};
    for (const auto& arg : atom.args) {
      auto pos = std::find(action.args.begin(), action.args.end(), arg);
      if (pos == action.args.end()) break;
      lifted.args.push_back(schema->params[static_cast<std::size_t>(pos - action.args.begin())].name);
    }
    if (lifted.args.size() == atom.args.size())
      return {pddl::PatchKind::kAddPrecondition, action.name, {lifted, false}, {}};
  }
  throw UnmappableSituation("no fact of '" + situation.description + "' concerns " + action.str());
}

std::vector<EffectCandidate> acquire_effects(const pddl::Domain& domain, const pddl::Problem& problem,
                                             const sim::TaskBundle& task,
                                             const sim::SituationReport& situation, Session& session) {
  const auto touched = situation.objects();
  std::map<std::string, const sim::EffectEntry*> pool;  // ordered by object name
  for (const auto& e : task.effect_table) {
    bool relevant = std::any_of(e.replaces.begin(), e.replaces.end(),
                                [&](const auto& o) { return touched.contains(o); });
    if (!relevant) continue;
    for (const auto& kind : e.kinds) {
      std::string obj = sim::spawned_object_name(kind);
      if (problem.objects.contains(obj)) pool.emplace(obj, &e);
    }
  }

  std::vector<EffectCandidate> out;
  for (const auto& [obj, entry] : pool) {
    pddl::Atom atom = pddl::parse_literal(entry->literal).atom;
    for (auto& a : atom.args)
      if (a == "?o") a = obj;
    if (problem.init.contains(atom)) continue;
    pddl::KnowledgePatch patch{pddl::PatchKind::kAddEffect, entry->action, {atom, true},
                               {{obj, problem.objects.at(obj)}}};
    if (pddl::has_patch(domain, patch)) continue;
    const std::string prompt = oracle::render(
        oracle::TemplateId::kT2, {{"action", entry->query_action},
                                  {"preposition", entry->query_preposition},
                                  {"object", oracle::with_article(oracle::surface_name(obj))},
                                  {"connective", entry->query_connective}});
    if (session.ask(oracle::TemplateId::kT2, prompt).feasible == true)
      out.push_back({obj, entry, std::move(patch), std::nullopt});
  }
  return out;
}

std::size_t select_best(const std::vector<EffectCandidate>& candidates, Session& session) {
  if (candidates.empty()) throw SelectionError("no candidates to choose from");
  if (candidates.size() == 1) return 0;
  std::vector<std::string> names;
  for (const auto& c : candidates) names.push_back(oracle::surface_name(c.object));
  const std::string prompt = oracle::render_t3(names, candidates.front().entry->task);
  auto verdict = session.ask(oracle::TemplateId::kT3, prompt);
  if (verdict.selected_object) {
    auto it = std::find(names.begin(), names.end(), *verdict.selected_object);
    if (it != names.end()) return static_cast<std::size_t>(it - names.begin());
  }
  throw SelectionError("selection '" + verdict.raw_text + "' matches no candidate plan");
}

namespace {

class Run {
 public:
  Run(const sim::TaskBundle& task, sim::World& world, const oracle::Backend& backend, const Options& options)
      : task_(task), world_(world), options_(options), session_(backend), domain_(task.domain) {}

  Outcome operator()() {
    if (!switch_plan()) return finish(OutcomeKind::kNoSolution, "no initial plan");
    while (!world_.goal_satisfied()) {
      if (situation_ && !monitored_) {
        monitored_ = true;
        auto m = monitor(plan_, index_, *situation_, task_.phrases, session_);
        if (!m.feasible()) {
          const auto& bad = plan_.steps[*m.infeasible];
          auto patch = derive_precondition(domain_, world_.problem(), bad, *situation_, task_.precondition_map);
          if (pddl::has_patch(domain_, patch))
            return finish(OutcomeKind::kNoSolution, bad.str() + " is still flagged after " + patch.str());
          add_patch(patch);
          if (!switch_plan()) return finish(OutcomeKind::kNoSolution, "no plan after " + patch.str());
          continue;
        }
      }
      // Closed-world repair: the rest of the plan must still run from what
      // the robot now observes.
      planner::Plan rest;
      if (index_ < plan_.steps.size())
        rest.steps.assign(plan_.steps.begin() + static_cast<std::ptrdiff_t>(index_), plan_.steps.end());
      if (rest.steps.empty() || !planner::validate(rest, domain_, world_.observed_problem())) {
        if (!switch_plan()) return finish(OutcomeKind::kNoSolution, "no plan from the observed state");
        continue;
      }
      std::optional<sim::SituationReport> report;
      try {
        report = world_.execute(plan_.steps[index_]);
      } catch (const sim::ExecutionFailure& e) {
        return finish(OutcomeKind::kExecutionFailure, e.what());
      }
      ++index_;
      if (report) {
        situation_ = std::move(report);
        monitored_ = false;
        session_.note("situation", situation_->description);
      }
    }
    return finish(OutcomeKind::kCompleted, "");
  }

 private:
  bool switch_plan() {
    auto p = planner::plan(domain_, world_.observed_problem(), options_.search);
    if (!p && situation_) {
      auto candidates = acquire_effects(domain_, world_.observed_problem(), task_, *situation_, session_);
      std::vector<EffectCandidate> solvable;
      for (auto& c : candidates) {
        c.plan = planner::plan(pddl::apply_patch(domain_, c.patch), world_.observed_problem(), options_.search);
        if (c.plan) solvable.push_back(std::move(c));
      }
      if (!solvable.empty()) {
        auto& best = solvable[select_best(solvable, session_)];
        add_patch(best.patch);
        p = std::move(best.plan);
      }
    }
    if (!p) return false;
    plan_ = std::move(*p);
    index_ = 0;
    monitored_ = false;
    session_.note("plan", planner::format_plan(plan_, true));
    return true;
  }

  void add_patch(const pddl::KnowledgePatch& patch) {
    domain_ = pddl::apply_patch(domain_, patch);
    patches_.push_back(patch);
    session_.note("patch", patch.str());
    if (patches_.size() > options_.patch_cap)
      throw PatchBudgetExceeded("more than " + std::to_string(options_.patch_cap) + " patches");
  }

  Outcome finish(OutcomeKind kind, std::string detail) {
    Outcome out;
    out.kind = kind;
    out.detail = std::move(detail);
    out.trace = world_.trace();
    out.patches = patches_;
    out.queries = session_.queries();
    out.transcript = session_.take_transcript();
    return out;
  }

  const sim::TaskBundle& task_;
  sim::World& world_;
  const Options& options_;
  Session session_;
  pddl::Domain domain_;
  std::vector<pddl::KnowledgePatch> patches_;
  planner::Plan plan_;
  std::size_t index_ = 0;
  std::optional<sim::SituationReport> situation_;
  bool monitored_ = true;
};

}  // namespace

Outcome run(const sim::TaskBundle& task, sim::World& world, const oracle::Backend& backend,
            const Options& options) {
  return Run(task, world, backend, options)();
}

}  // namespace cowp::controller
