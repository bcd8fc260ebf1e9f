#pragma once

// Shared test helpers: file access and a generator of small random STRIPS
// tasks used by the property suites.

#include <algorithm>
#include <filesystem>
#include <optional>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cowp/pddl.hpp"
#include "cowp/planner.hpp"

namespace cowp::testing {

inline std::filesystem::path data_dir() { return COWP_DATA_DIR; }

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline pddl::Domain drinking_water_domain() {
  return pddl::parse_domain(read_file(data_dir() / "tasks/drinking_water/domain.pddl"));
}

inline pddl::Problem drinking_water_problem(const pddl::Domain& d) {
  return pddl::parse_problem(read_file(data_dir() / "tasks/drinking_water/problem.pddl"), d);
}

struct RandomTask {
  pddl::Domain domain;
  pddl::Problem problem;
  std::size_t atom_count = 0;
};

/// Untyped-ish task over one type "thing" with at most `max_atoms` ground
/// atoms in the universe. Without `negative`, preconditions and goals are
/// positive only.
inline RandomTask random_task(std::mt19937& rng, std::size_t max_atoms = 12, bool negative = true) {
  auto pick = [&](int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
  };
  auto coin = [&](double p) { return std::bernoulli_distribution(p)(rng); };

  RandomTask t;
  pddl::Domain& d = t.domain;
  d.name = "rand";
  d.requirements = {":strips", ":typing", ":negative-preconditions"};
  d.types = {{"thing", "object"}};

  const int objects = pick(2, 3);
  int unary = pick(1, 3);
  int binary = pick(0, 1);
  while (static_cast<std::size_t>(unary * objects + binary * objects * objects) > max_atoms) {
    if (binary > 0) --binary; else --unary;
  }
  for (int i = 0; i < unary; ++i)
    d.predicates.push_back({"u" + std::to_string(i), {{"?x", "thing"}}});
  for (int i = 0; i < binary; ++i)
    d.predicates.push_back({"b" + std::to_string(i), {{"?x", "thing"}, {"?y", "thing"}}});
  t.atom_count = static_cast<std::size_t>(unary * objects + binary * objects * objects);

  const int actions = pick(2, 4);
  for (int a = 0; a < actions; ++a) {
    pddl::ActionSchema s;
    s.name = "act" + std::to_string(a);
    const int params = pick(1, 2);
    for (int p = 0; p < params; ++p) s.params.push_back({"?p" + std::to_string(p), "thing"});
    auto random_atom = [&]() {
      const auto& pred = d.predicates[static_cast<std::size_t>(pick(0, static_cast<int>(d.predicates.size()) - 1))];
      pddl::Atom atom{pred.name, {}};
      for (std::size_t k = 0; k < pred.params.size(); ++k)
        atom.args.push_back(s.params[static_cast<std::size_t>(pick(0, params - 1))].name);
      return atom;
    };
    const int pres = pick(0, 2);
    for (int i = 0; i < pres; ++i) {
      pddl::Literal l{random_atom(), !negative || !coin(0.25)};
      if (std::find(s.precondition.begin(), s.precondition.end(), l) == s.precondition.end())
        s.precondition.push_back(l);
    }
    const int effects = pick(1, 3);
    for (int i = 0; i < effects; ++i) {
      pddl::Atom atom = random_atom();
      bool add = coin(0.6);
      auto& mine = add ? s.add_effects : s.del_effects;
      auto& other = add ? s.del_effects : s.add_effects;
      if (std::find(other.begin(), other.end(), atom) != other.end()) continue;
      if (std::find(mine.begin(), mine.end(), atom) == mine.end()) mine.push_back(atom);
    }
    d.actions.push_back(std::move(s));
  }

  pddl::Problem& p = t.problem;
  p.name = "rand_p";
  p.domain_name = d.name;
  for (int o = 0; o < objects; ++o) p.objects.emplace("o" + std::to_string(o), "thing");
  std::vector<pddl::Atom> universe;
  for (const auto& pred : d.predicates) {
    if (pred.params.size() == 1) {
      for (const auto& [o, _] : p.objects) universe.push_back({pred.name, {o}});
    } else {
      for (const auto& [o1, _] : p.objects)
        for (const auto& [o2, __] : p.objects) universe.push_back({pred.name, {o1, o2}});
    }
  }
  for (const auto& a : universe)
    if (coin(0.3)) p.init.insert(a);
  const int goals = pick(1, 3);
  for (int i = 0; i < goals; ++i) {
    pddl::Literal l{universe[static_cast<std::size_t>(pick(0, static_cast<int>(universe.size()) - 1))],
                    !negative || !coin(0.2)};
    if (std::find(p.goal.begin(), p.goal.end(), l) == p.goal.end()) p.goal.push_back(l);
  }
  pddl::check_domain(d);
  pddl::check_problem(p, d);
  return t;
}

/// Every ground atom of the task's universe.
inline std::vector<pddl::Atom> universe(const pddl::Domain& d, const pddl::Problem& p) {
  std::vector<pddl::Atom> out;
  std::vector<std::string> objects;
  for (const auto& [o, _] : p.objects) objects.push_back(o);
  for (const auto& pred : d.predicates) {
    std::vector<std::size_t> idx(pred.params.size(), 0);
    while (true) {
      pddl::Atom a{pred.name, {}};
      for (auto i : idx) a.args.push_back(objects[i]);
      out.push_back(a);
      std::ptrdiff_t k = static_cast<std::ptrdiff_t>(idx.size()) - 1;
      for (; k >= 0; --k) {
        if (++idx[static_cast<std::size_t>(k)] < objects.size()) break;
        idx[static_cast<std::size_t>(k)] = 0;
      }
      if (k < 0) break;
    }
  }
  return out;
}

using StateSet = std::set<std::set<pddl::Atom>>;

inline StateSet state_set(const std::vector<pddl::State>& states) {
  StateSet out;
  for (const auto& s : states) out.insert(s.atoms());
  return out;
}

/// Every state of `before` is contained in some state of `after`.
inline bool dominated(const StateSet& before, const StateSet& after) {
  for (const auto& b : before) {
    bool covered = false;
    for (const auto& a : after) {
      if (std::includes(a.begin(), a.end(), b.begin(), b.end())) {
        covered = true;
        break;
      }
    }
    if (!covered) return false;
  }
  return true;
}

/// A patch over the parameters of a random action. Effect patches never
/// contradict an existing delete effect.
inline std::optional<pddl::KnowledgePatch> random_patch(std::mt19937& rng, const pddl::Domain& d,
                                                        pddl::PatchKind kind) {
  auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
  const auto& action = d.actions[pick(d.actions.size())];
  const auto& pred = d.predicates[pick(d.predicates.size())];
  pddl::Atom atom{pred.name, {}};
  for (std::size_t k = 0; k < pred.params.size(); ++k) atom.args.push_back(action.params[pick(action.params.size())].name);
  if (kind == pddl::PatchKind::kAddEffect) {
    if (std::find(action.del_effects.begin(), action.del_effects.end(), atom) != action.del_effects.end())
      return std::nullopt;
    return pddl::KnowledgePatch{kind, action.name, {atom, true}, {}};
  }
  return pddl::KnowledgePatch{kind, action.name, {atom, std::bernoulli_distribution(0.5)(rng)}, {}};
}

struct MonotonicityReport {
  int domains = 0;
  int precondition_checks = 0;
  int effect_checks = 0;
  std::string failure;
};

/// Exhaustive reachability before and after random patches: an added
/// precondition never enlarges the reachable set; an added effect leaves
/// every formerly reachable state covered by a reachable superset. The
/// effect half is checked on positive-precondition domains, where it holds.
inline MonotonicityReport check_patch_monotonicity(std::uint32_t seed, int domains) {
  MonotonicityReport r;
  std::mt19937 rng(seed);
  for (int i = 0; i < domains; ++i) {
    auto t = random_task(rng, 12, i % 2 == 0);
    const auto before = state_set(planner::reachable_states(t.domain, t.problem));
    for (int k = 0; k < 3; ++k) {
      auto patch = random_patch(rng, t.domain, pddl::PatchKind::kAddPrecondition);
      if (pddl::has_patch(t.domain, *patch)) continue;
      auto after = state_set(planner::reachable_states(pddl::apply_patch(t.domain, *patch), t.problem));
      ++r.precondition_checks;
      if (!std::includes(before.begin(), before.end(), after.begin(), after.end()) && r.failure.empty())
        r.failure = "domain " + std::to_string(i) + ": " + patch->str() + " enlarged the reachable set";
    }
    if (i % 2 == 0) continue;
    for (int k = 0; k < 6; ++k) {
      auto patch = random_patch(rng, t.domain, pddl::PatchKind::kAddEffect);
      if (!patch || pddl::has_patch(t.domain, *patch)) continue;
      auto after = state_set(planner::reachable_states(pddl::apply_patch(t.domain, *patch), t.problem));
      ++r.effect_checks;
      if (!dominated(before, after) && r.failure.empty())
        r.failure = "domain " + std::to_string(i) + ": " + patch->str() + " lost a reachable state";
    }
  }
  r.domains = domains;
  return r;
}

}  // namespace cowp::testing
