#include "cowp/planner.hpp"

#include <algorithm>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <queue>
#include <sstream>
#include <unordered_map>

namespace cowp::planner {

namespace {

using Bits = std::vector<std::uint64_t>;

struct BitsHash {
  std::size_t operator()(const Bits& b) const {
    std::size_t h = 1469598103934665603ULL;
    for (auto w : b) {
      h ^= w + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    }
    return h;
  }
};

bool test(const Bits& b, int i) { return (b[i >> 6] >> (i & 63)) & 1ULL; }
void set(Bits& b, int i) { b[i >> 6] |= (1ULL << (i & 63)); }
void reset(Bits& b, int i) { b[i >> 6] &= ~(1ULL << (i & 63)); }

struct CompiledAction {
  std::vector<int> pre_pos;
  std::vector<int> pre_neg;
  std::vector<int> add;
  std::vector<int> del;
  std::size_t source = 0;  // index into grounded action list
};

// Integer encoding of a grounded task.
class CompiledTask {
 public:
  CompiledTask(const pddl::Domain& domain, const pddl::Problem& problem)
      : ground_(pddl::ground(domain, problem)) {
    for (const auto& a : problem.init) intern(a);
    for (const auto& l : problem.goal) {
      int id = intern(l.atom);
      (l.positive ? goal_pos_ : goal_neg_).push_back(id);
    }
    // Predicates never touched by an effect are static; actions requiring an
    // absent static atom can never fire.
    std::set<std::string> fluent;
    for (const auto& ga : ground_) {
      for (const auto& a : ga.add_effects) fluent.insert(a.predicate);
      for (const auto& a : ga.del_effects) fluent.insert(a.predicate);
    }
    for (std::size_t i = 0; i < ground_.size(); ++i) {
      const auto& ga = ground_[i];
      bool dead = false;
      for (const auto& l : ga.precondition) {
        if (fluent.contains(l.atom.predicate)) continue;
        if (problem.init.contains(l.atom) != l.positive) {
          dead = true;
          break;
        }
      }
      if (dead) continue;
      CompiledAction ca;
      ca.source = i;
      for (const auto& l : ga.precondition)
        (l.positive ? ca.pre_pos : ca.pre_neg).push_back(intern(l.atom));
      for (const auto& a : ga.add_effects) ca.add.push_back(intern(a));
      for (const auto& a : ga.del_effects) ca.del.push_back(intern(a));
      actions_.push_back(std::move(ca));
    }
    words_ = (atoms_.size() + 63) / 64;
    init_ = Bits(words_, 0);
    for (const auto& a : problem.init) set(init_, ids_.at(a));
    by_pre_.resize(atoms_.size());
    for (std::size_t i = 0; i < actions_.size(); ++i)
      for (int p : actions_[i].pre_pos) by_pre_[p].push_back(static_cast<int>(i));
  }

  const Bits& init() const { return init_; }
  const std::vector<CompiledAction>& actions() const { return actions_; }
  const pddl::GroundAction& ground(std::size_t i) const { return ground_[actions_[i].source]; }

  bool is_goal(const Bits& s) const {
    for (int g : goal_pos_)
      if (!test(s, g)) return false;
    for (int g : goal_neg_)
      if (test(s, g)) return false;
    return true;
  }

  bool applicable(const Bits& s, const CompiledAction& a) const {
    for (int p : a.pre_pos)
      if (!test(s, p)) return false;
    for (int p : a.pre_neg)
      if (test(s, p)) return false;
    return true;
  }

  Bits apply(const Bits& s, const CompiledAction& a) const {
    Bits next = s;
    for (int d : a.del) reset(next, d);
    for (int e : a.add) set(next, e);
    return next;
  }

  static constexpr long kInfinity = std::numeric_limits<long>::max() / 4;

  // Additive relaxation (negative conditions ignored).
  long h_add(const Bits& s) const {
    const std::size_t n = atoms_.size();
    std::vector<long> cost(n, kInfinity);
    std::vector<int> missing(actions_.size());
    std::vector<long> sum(actions_.size(), 0);
    using Entry = std::pair<long, int>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue;
    for (std::size_t i = 0; i < n; ++i) {
      if (test(s, static_cast<int>(i))) {
        cost[i] = 0;
        queue.emplace(0, static_cast<int>(i));
      }
    }
    auto fire = [&](std::size_t ai) {
      long c = sum[ai] + 1;
      for (int e : actions_[ai].add) {
        if (c < cost[e]) {
          cost[e] = c;
          queue.emplace(c, e);
        }
      }
    };
    for (std::size_t i = 0; i < actions_.size(); ++i) {
      missing[i] = static_cast<int>(actions_[i].pre_pos.size());
      if (missing[i] == 0) fire(i);
    }
    while (!queue.empty()) {
      auto [c, atom] = queue.top();
      queue.pop();
      if (c > cost[atom]) continue;
      for (int ai : by_pre_[atom]) {
        sum[ai] += c;
        if (--missing[ai] == 0) fire(static_cast<std::size_t>(ai));
      }
    }
    long h = 0;
    for (int g : goal_pos_) {
      if (cost[g] >= kInfinity) return kInfinity;
      h += cost[g];
    }
    return h;
  }

  pddl::State decode(const Bits& s) const {
    pddl::State out;
    for (std::size_t i = 0; i < atoms_.size(); ++i)
      if (test(s, static_cast<int>(i))) out.insert(atoms_[i]);
    return out;
  }

 private:
  int intern(const pddl::Atom& a) {
    auto [it, inserted] = ids_.emplace(a, static_cast<int>(atoms_.size()));
    if (inserted) atoms_.push_back(a);
    return it->second;
  }

  std::vector<pddl::GroundAction> ground_;
  std::map<pddl::Atom, int> ids_;
  std::vector<pddl::Atom> atoms_;
  std::vector<CompiledAction> actions_;
  std::vector<std::vector<int>> by_pre_;
  std::vector<int> goal_pos_;
  std::vector<int> goal_neg_;
  std::size_t words_ = 0;
  Bits init_;
};

struct SearchNode {
  int parent = -1;
  int action = -1;
};

Plan extract(const CompiledTask& task, const std::vector<SearchNode>& nodes,
             int node) {
  Plan plan;
  while (nodes[node].parent >= 0) {
    plan.steps.push_back(task.ground(static_cast<std::size_t>(nodes[node].action)));
    node = nodes[node].parent;
  }
  std::reverse(plan.steps.begin(), plan.steps.end());
  return plan;
}

PlanOutcome breadth_first(const CompiledTask& task, std::size_t depth_limit,
                          std::size_t max_states, bool count_expansions) {
  std::vector<SearchNode> nodes{{}};
  std::vector<Bits> states{task.init()};
  std::vector<std::size_t> depth{0};
  std::unordered_map<Bits, int, BitsHash> seen{{task.init(), 0}};
  if (task.is_goal(task.init())) return Plan{};
  bool cut_off = false;
  std::deque<int> frontier{0};
  std::size_t expansions = 0;
  while (!frontier.empty()) {
    int current = frontier.front();
    frontier.pop_front();
    if (depth[current] >= depth_limit) {
      cut_off = true;
      continue;
    }
    if (count_expansions && ++expansions > max_states)
      throw BudgetExceeded("expansion budget of " + std::to_string(max_states) +
                           " exhausted");
    const Bits state = states[current];
    const std::size_t d = depth[current];
    for (std::size_t ai = 0; ai < task.actions().size(); ++ai) {
      const auto& a = task.actions()[ai];
      if (!task.applicable(state, a)) continue;
      Bits next = task.apply(state, a);
      if (seen.contains(next)) continue;
      if (!count_expansions && seen.size() >= max_states)
        throw BudgetExceeded("state limit of " + std::to_string(max_states) +
                             " exceeded");
      int id = static_cast<int>(nodes.size());
      nodes.push_back({current, static_cast<int>(ai)});
      depth.push_back(d + 1);
      seen.emplace(next, id);
      if (task.is_goal(next)) return extract(task, nodes, id);
      states.push_back(std::move(next));
      frontier.push_back(id);
    }
  }
  if (cut_off)
    throw BudgetExceeded("depth limit " + std::to_string(depth_limit) +
                         " reached before the search space was exhausted");
  return std::nullopt;
}

}  // namespace

PlanOutcome plan(const pddl::Domain& domain, const pddl::Problem& problem,
                 const SearchOptions& options) {
  CompiledTask task(domain, problem);
  if (task.is_goal(task.init())) return Plan{};
  const long h0 = task.h_add(task.init());
  if (h0 >= CompiledTask::kInfinity) return std::nullopt;
  if (h0 == 0)
    return breadth_first(task, std::numeric_limits<std::size_t>::max(),
                         options.max_expansions, true);

  // Greedy best-first; ties broken by generation order, which follows the
  // lexicographic order of ground actions.
  struct Entry {
    long h;
    std::size_t order;
    int node;
    bool operator>(const Entry& o) const {
      return h != o.h ? h > o.h : order > o.order;
    }
  };
  std::vector<SearchNode> nodes{{}};
  std::vector<Bits> states{task.init()};
  std::unordered_map<Bits, int, BitsHash> seen{{task.init(), 0}};
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
  std::size_t order = 0;
  open.push({h0, order++, 0});
  std::size_t expansions = 0;
  while (!open.empty()) {
    Entry e = open.top();
    open.pop();
    if (++expansions > options.max_expansions)
      throw BudgetExceeded("expansion budget of " +
                           std::to_string(options.max_expansions) + " exhausted");
    const Bits state = states[e.node];
    for (std::size_t ai = 0; ai < task.actions().size(); ++ai) {
      const auto& a = task.actions()[ai];
      if (!task.applicable(state, a)) continue;
      Bits next = task.apply(state, a);
      if (seen.contains(next)) continue;
      int id = static_cast<int>(nodes.size());
      nodes.push_back({e.node, static_cast<int>(ai)});
      seen.emplace(next, id);
      if (task.is_goal(next)) return extract(task, nodes, id);
      long h = task.h_add(next);
      states.push_back(std::move(next));
      if (h >= CompiledTask::kInfinity) continue;
      open.push({h, order++, id});
    }
  }
  return std::nullopt;
}

PlanOutcome bfs_oracle(const pddl::Domain& domain, const pddl::Problem& problem,
                       std::size_t depth_limit, std::size_t max_states) {
  CompiledTask task(domain, problem);
  return breadth_first(task, depth_limit, max_states, false);
}

ValidationReport check_plan(const Plan& plan, const pddl::Domain& domain,
                            const pddl::Problem& problem) {
  ValidationReport report;
  pddl::State state = problem.init;
  for (std::size_t i = 0; i < plan.steps.size(); ++i) {
    const auto& step = plan.steps[i];
    pddl::GroundAction ga;
    try {
      ga = pddl::instantiate(domain, problem, step.name, step.args);
    } catch (const pddl::ModelError& e) {
      report.failed_step = i;
      report.reason = e.what();
      return report;
    }
    for (const auto& l : ga.precondition) {
      if (!pddl::holds(state, l)) {
        report.failed_step = i;
        report.reason = "precondition " + l.str() + " of " + ga.str() + " does not hold";
        return report;
      }
    }
    state = pddl::apply(state, ga);
  }
  for (const auto& l : problem.goal) {
    if (!pddl::holds(state, l)) {
      report.reason = "goal literal " + l.str() + " does not hold";
      return report;
    }
  }
  report.valid = true;
  return report;
}

bool validate(const Plan& plan, const pddl::Domain& domain,
              const pddl::Problem& problem) {
  return check_plan(plan, domain, problem).valid;
}

std::string format_plan(const Plan& plan, bool numbered) {
  std::string out;
  for (std::size_t i = 0; i < plan.steps.size(); ++i) {
    if (numbered) out += "S" + std::to_string(i + 1) + ": ";
    out += plan.steps[i].str() + "\n";
  }
  return out;
}

Plan parse_plan(std::string_view text, const pddl::Domain& domain,
                const pddl::Problem& problem) {
  Plan plan;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto c = line.find(';'); c != std::string::npos) line.erase(c);
    auto open = line.find('(');
    if (open == std::string::npos) {
      if (line.find_first_not_of(" \t\r") != std::string::npos)
        throw pddl::ParseError("expected '(' in plan step", line_no, 1);
      continue;
    }
    auto close = line.find(')', open);
    if (close == std::string::npos)
      throw pddl::ParseError("unterminated plan step", line_no, open + 1);
    std::istringstream words(pddl::lowercase(line.substr(open + 1, close - open - 1)));
    std::string name;
    words >> name;
    if (name.empty()) throw pddl::ParseError("empty plan step", line_no, open + 1);
    std::vector<std::string> args;
    for (std::string w; words >> w;) args.push_back(w);
    plan.steps.push_back(pddl::instantiate(domain, problem, name, args));
  }
  return plan;
}

std::vector<pddl::State> reachable_states(const pddl::Domain& domain,
                                          const pddl::Problem& problem,
                                          std::size_t max_states) {
  CompiledTask task(domain, problem);
  std::vector<Bits> states{task.init()};
  std::unordered_map<Bits, int, BitsHash> seen{{task.init(), 0}};
  for (std::size_t i = 0; i < states.size(); ++i) {
    for (const auto& a : task.actions()) {
      if (!task.applicable(states[i], a)) continue;
      Bits next = task.apply(states[i], a);
      if (seen.contains(next)) continue;
      if (states.size() >= max_states)
        throw BudgetExceeded("more than " + std::to_string(max_states) + " reachable states");
      seen.emplace(next, static_cast<int>(states.size()));
      states.push_back(std::move(next));
    }
  }
  std::vector<pddl::State> out;
  out.reserve(states.size());
  for (const auto& s : states) out.push_back(task.decode(s));
  std::sort(out.begin(), out.end(),
            [](const pddl::State& a, const pddl::State& b) { return a.atoms() < b.atoms(); });
  return out;
}

}  // namespace cowp::planner
