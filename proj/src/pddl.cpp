#include "cowp/pddl.hpp"

#include <algorithm>
#include <cctype>
#include <functional>
#include <sstream>
#include <utility>

namespace cowp::pddl {

ParseError::ParseError(const std::string& what, std::size_t line,
                       std::size_t column)
    : std::runtime_error(std::to_string(line) + ":" + std::to_string(column) +
                         ": " + what),
      line_(line),
      column_(column) {}

std::string lowercase(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::string Atom::str() const {
  std::string out = "(" + predicate;
  for (const auto& a : args) out += " " + a;
  return out + ")";
}

std::string Literal::str() const {
  return positive ? atom.str() : "(not " + atom.str() + ")";
}

std::string GroundAction::str() const {
  std::string out = "(" + name;
  for (const auto& a : args) out += " " + a;
  return out + ")";
}

std::string KnowledgePatch::str() const {
  return (kind == PatchKind::kAddPrecondition ? "AddPrecondition("
                                              : "AddEffect(") +
         action + ", " + literal.str() + ")";
}

const TypedName* ActionSchema::param(std::string_view variable) const {
  for (const auto& p : params)
    if (p.name == variable) return &p;
  return nullptr;
}

const PredicateDecl* Domain::predicate(std::string_view name) const {
  for (const auto& p : predicates)
    if (p.name == name) return &p;
  return nullptr;
}

const ActionSchema* Domain::action(std::string_view name) const {
  for (const auto& a : actions)
    if (a.name == name) return &a;
  return nullptr;
}

bool Domain::has_type(std::string_view type) const {
  return type == kRootType || types.contains(std::string(type));
}

bool Domain::is_subtype(std::string_view type,
                        std::string_view ancestor) const {
  std::string current(type);
  for (std::size_t guard = 0; guard <= types.size() + 1; ++guard) {
    if (current == ancestor) return true;
    if (current == kRootType) return false;
    auto it = types.find(current);
    if (it == types.end()) return false;
    current = it->second;
  }
  return false;
}

namespace {

// ---------------------------------------------------------------------------
// S-expression reader

struct Node {
  bool is_list = false;
  std::string token;
  std::vector<Node> children;
  std::size_t line = 1;
  std::size_t column = 1;
};

class Reader {
 public:
  explicit Reader(std::string_view text) : text_(text) {}

  Node read_document() {
    skip_space();
    if (at_end()) throw ParseError("empty input", line_, column_);
    Node root = read();
    skip_space();
    if (!at_end()) throw ParseError("trailing content", line_, column_);
    return root;
  }

 private:
  bool at_end() const { return pos_ >= text_.size(); }

  void advance() {
    if (text_[pos_] == '\n') {
      ++line_;
      column_ = 1;
    } else {
      ++column_;
    }
    ++pos_;
  }

  void skip_space() {
    while (!at_end()) {
      char c = text_[pos_];
      if (c == ';') {
        while (!at_end() && text_[pos_] != '\n') advance();
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
      } else {
        break;
      }
    }
  }

  Node read() {
    skip_space();
    if (at_end()) throw ParseError("unexpected end of input", line_, column_);
    Node node;
    node.line = line_;
    node.column = column_;
    char c = text_[pos_];
    if (c == ')') throw ParseError("unexpected ')'", line_, column_);
    if (c == '(') {
      node.is_list = true;
      advance();
      while (true) {
        skip_space();
        if (at_end())
          throw ParseError("unbalanced '('", node.line, node.column);
        if (text_[pos_] == ')') {
          advance();
          break;
        }
        node.children.push_back(read());
      }
      return node;
    }
    std::size_t start = pos_;
    while (!at_end()) {
      char d = text_[pos_];
      if (d == '(' || d == ')' || d == ';' ||
          std::isspace(static_cast<unsigned char>(d)))
        break;
      advance();
    }
    node.token = lowercase(text_.substr(start, pos_ - start));
    return node;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
  std::size_t column_ = 1;
};

[[noreturn]] void fail(const Node& at, const std::string& what) {
  throw ParseError(what, at.line, at.column);
}

const std::string& expect_token(const Node& node, const char* what) {
  if (node.is_list) fail(node, std::string("expected ") + what);
  return node.token;
}

bool is_keyword(const Node& node, std::string_view keyword) {
  return !node.is_list && node.token == keyword;
}

bool is_identifier(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' ||
          c == '-'))
      return false;
  }
  return std::isalpha(static_cast<unsigned char>(s.front()));
}

// "a b - t c ?x" style typed list.
std::vector<TypedName> read_typed_list(const std::vector<Node>& items,
                                       std::size_t first, bool variables) {
  std::vector<TypedName> out;
  std::vector<TypedName> pending;
  for (std::size_t i = first; i < items.size(); ++i) {
    const Node& n = items[i];
    const std::string& tok = expect_token(n, "name");
    if (tok == "-") {
      if (i + 1 >= items.size()) fail(n, "missing type after '-'");
      const Node& t = items[++i];
      if (t.is_list) fail(t, "'either' types are not supported");
      if (!is_identifier(t.token)) fail(t, "invalid type name '" + t.token + "'");
      if (pending.empty()) fail(n, "type without names");
      for (auto& p : pending) {
        p.type = t.token;
        out.push_back(std::move(p));
      }
      pending.clear();
      continue;
    }
    if (variables) {
      if (tok.size() < 2 || tok[0] != '?' || !is_identifier(tok.substr(1)))
        fail(n, "expected variable, got '" + tok + "'");
    } else if (!is_identifier(tok)) {
      fail(n, "invalid name '" + tok + "'");
    }
    pending.push_back(TypedName{tok, std::string(kRootType)});
  }
  for (auto& p : pending) out.push_back(std::move(p));
  return out;
}

Atom read_atom(const Node& node) {
  if (!node.is_list || node.children.empty()) fail(node, "expected atom");
  Atom atom;
  atom.predicate = expect_token(node.children[0], "predicate name");
  if (atom.predicate == "=") fail(node, "equality is not supported");
  if (!is_identifier(atom.predicate))
    fail(node.children[0], "invalid predicate name '" + atom.predicate + "'");
  for (std::size_t i = 1; i < node.children.size(); ++i) {
    const std::string& term = expect_token(node.children[i], "term");
    atom.args.push_back(term);
  }
  return atom;
}

Literal read_literal(const Node& node) {
  if (node.is_list && !node.children.empty() &&
      is_keyword(node.children[0], "not")) {
    if (node.children.size() != 2) fail(node, "'not' takes one atom");
    return Literal{read_atom(node.children[1]), false};
  }
  return Literal{read_atom(node), true};
}

const std::set<std::string>& unsupported_connectives() {
  static const std::set<std::string> kSet = {
      "or", "imply", "forall", "exists", "when", "increase", "decrease",
      "assign", "scale-up", "scale-down", "at", "over", "preference"};
  return kSet;
}

// Conjunction of literals: "(and l1 l2 ...)", a single literal or "()".
std::vector<Literal> read_conjunction(const Node& node) {
  if (!node.is_list) fail(node, "expected formula");
  if (node.children.empty()) return {};
  const Node& head = node.children[0];
  if (is_keyword(head, "and")) {
    std::vector<Literal> out;
    for (std::size_t i = 1; i < node.children.size(); ++i) {
      const Node& c = node.children[i];
      if (c.is_list && !c.children.empty() && is_keyword(c.children[0], "and")) {
        auto nested = read_conjunction(c);
        out.insert(out.end(), nested.begin(), nested.end());
      } else {
        if (c.is_list && !c.children.empty() && !c.children[0].is_list &&
            unsupported_connectives().contains(c.children[0].token))
          fail(c, "unsupported construct '" + c.children[0].token + "'");
        out.push_back(read_literal(c));
      }
    }
    return out;
  }
  if (!head.is_list && unsupported_connectives().contains(head.token))
    fail(node, "unsupported construct '" + head.token + "'");
  return {read_literal(node)};
}

void check_header(const Node& root, std::string_view kind, std::string& name) {
  if (!root.is_list || root.children.size() < 2 ||
      !is_keyword(root.children[0], "define"))
    fail(root, "expected (define ...)");
  const Node& head = root.children[1];
  if (!head.is_list || head.children.size() != 2 ||
      !is_keyword(head.children[0], kind))
    fail(head, "expected (" + std::string(kind) + " <name>)");
  name = expect_token(head.children[1], "name");
  if (!is_identifier(name)) fail(head.children[1], "invalid name '" + name + "'");
}

// ---------------------------------------------------------------------------
// Validation helpers

bool compatible(const Domain& d, std::string_view a, std::string_view b) {
  return d.is_subtype(a, b) || d.is_subtype(b, a);
}

void check_atom_decl(const Domain& domain, const Atom& atom,
                     const std::function<std::optional<std::string>(
                         const std::string&)>& type_of,
                     const std::string& where, bool strict) {
  const PredicateDecl* decl = domain.predicate(atom.predicate);
  if (decl == nullptr)
    throw ModelError(where + ": undeclared predicate '" + atom.predicate + "'");
  if (decl->params.size() != atom.args.size())
    throw ModelError(where + ": arity mismatch for '" + atom.predicate +
                     "' (expected " + std::to_string(decl->params.size()) +
                     ", got " + std::to_string(atom.args.size()) + ")");
  for (std::size_t i = 0; i < atom.args.size(); ++i) {
    auto type = type_of(atom.args[i]);
    if (!type)
      throw ModelError(where + ": undeclared term '" + atom.args[i] + "' in " +
                       atom.str());
    bool ok = strict ? domain.is_subtype(*type, decl->params[i].type)
                     : compatible(domain, *type, decl->params[i].type);
    if (!ok)
      throw ModelError(where + ": term '" + atom.args[i] + "' of type '" +
                       *type + "' does not fit parameter " +
                       std::to_string(i + 1) + " of '" + atom.predicate +
                       "' (type '" + decl->params[i].type + "')");
  }
}

std::optional<std::string> constant_type(const Domain& d,
                                         const std::string& name) {
  for (const auto& c : d.constants)
    if (c.name == name) return c.type;
  return std::nullopt;
}

void check_action(const Domain& domain, const ActionSchema& action) {
  const std::string where = "action '" + action.name + "'";
  std::set<std::string> seen;
  for (const auto& p : action.params) {
    if (!seen.insert(p.name).second)
      throw ModelError(where + ": duplicate parameter '" + p.name + "'");
    if (!domain.has_type(p.type))
      throw ModelError(where + ": unknown type '" + p.type + "'");
  }
  auto type_of = [&](const std::string& term) -> std::optional<std::string> {
    if (!term.empty() && term[0] == '?') {
      const TypedName* p = action.param(term);
      if (p == nullptr) return std::nullopt;
      return p->type;
    }
    return constant_type(domain, term);
  };
  for (const auto& lit : action.precondition)
    check_atom_decl(domain, lit.atom, type_of, where + " precondition", false);
  for (const auto& a : action.add_effects)
    check_atom_decl(domain, a, type_of, where + " effect", false);
  for (const auto& a : action.del_effects)
    check_atom_decl(domain, a, type_of, where + " effect", false);
  for (const auto& a : action.add_effects) {
    if (std::find(action.del_effects.begin(), action.del_effects.end(), a) !=
        action.del_effects.end())
      throw ModelError(where + ": " + a.str() +
                       " is both added and deleted");
  }
}

}  // namespace

void check_domain(const Domain& domain) {
  for (const auto& [child, parent] : domain.types) {
    if (child == kRootType) throw ModelError("type 'object' cannot be redeclared");
    if (!domain.has_type(parent))
      throw ModelError("type '" + child + "' has unknown parent '" + parent + "'");
    if (!domain.is_subtype(child, kRootType))
      throw ModelError("type hierarchy is cyclic at '" + child + "'");
  }
  std::set<std::string> names;
  for (const auto& c : domain.constants) {
    if (!names.insert(c.name).second)
      throw ModelError("duplicate constant '" + c.name + "'");
    if (!domain.has_type(c.type))
      throw ModelError("constant '" + c.name + "' has unknown type '" + c.type + "'");
  }
  names.clear();
  for (const auto& p : domain.predicates) {
    if (!names.insert(p.name).second)
      throw ModelError("duplicate predicate '" + p.name + "'");
    for (const auto& param : p.params)
      if (!domain.has_type(param.type))
        throw ModelError("predicate '" + p.name + "' uses unknown type '" +
                         param.type + "'");
  }
  names.clear();
  for (const auto& a : domain.actions) {
    if (!names.insert(a.name).second)
      throw ModelError("duplicate action '" + a.name + "'");
    check_action(domain, a);
  }
}

std::map<std::string, std::string> all_objects(const Domain& domain,
                                               const Problem& problem) {
  std::map<std::string, std::string> out;
  for (const auto& c : domain.constants) out.emplace(c.name, c.type);
  for (const auto& [name, type] : problem.objects) {
    auto [it, inserted] = out.emplace(name, type);
    if (!inserted && it->second != type)
      throw ModelError("object '" + name + "' declared with types '" +
                       it->second + "' and '" + type + "'");
  }
  return out;
}

void check_problem(const Problem& problem, const Domain& domain) {
  if (problem.domain_name != domain.name)
    throw ModelError("problem refers to domain '" + problem.domain_name +
                     "' but domain is '" + domain.name + "'");
  for (const auto& [name, type] : problem.objects)
    if (!domain.has_type(type))
      throw ModelError("object '" + name + "' has unknown type '" + type + "'");
  const auto objects = all_objects(domain, problem);
  auto type_of = [&](const std::string& term) -> std::optional<std::string> {
    auto it = objects.find(term);
    if (it == objects.end()) return std::nullopt;
    return it->second;
  };
  for (const auto& atom : problem.init)
    check_atom_decl(domain, atom, type_of, "init", true);
  for (const auto& lit : problem.goal)
    check_atom_decl(domain, lit.atom, type_of, "goal", true);
}

Domain parse_domain(std::string_view text) {
  Node root = Reader(text).read_document();
  Domain domain;
  check_header(root, "domain", domain.name);
  std::set<std::string> sections;
  for (std::size_t i = 2; i < root.children.size(); ++i) {
    const Node& section = root.children[i];
    if (!section.is_list || section.children.empty())
      fail(section, "expected domain section");
    const std::string& key = expect_token(section.children[0], "section keyword");
    if (key != ":action" && !sections.insert(key).second)
      fail(section, "duplicate section " + key);
    if (key == ":requirements") {
      static const std::set<std::string> kSupported = {
          ":strips", ":typing", ":negative-preconditions"};
      for (std::size_t j = 1; j < section.children.size(); ++j) {
        const std::string& req = expect_token(section.children[j], "requirement");
        if (!kSupported.contains(req))
          fail(section.children[j], "unsupported requirement " + req);
        domain.requirements.push_back(req);
      }
    } else if (key == ":types") {
      for (auto& t : read_typed_list(section.children, 1, false)) {
        if (t.name == kRootType) continue;
        if (!t.type.empty() && t.type != kRootType && !domain.types.contains(t.type))
          domain.types.emplace(t.type, std::string(kRootType));
        auto [it, inserted] = domain.types.emplace(t.name, t.type);
        if (!inserted) {
          if (it->second == kRootType) it->second = t.type;
          else if (it->second != t.type)
            fail(section, "type '" + t.name + "' has two parents");
        }
      }
    } else if (key == ":constants") {
      domain.constants = read_typed_list(section.children, 1, false);
    } else if (key == ":predicates") {
      for (std::size_t j = 1; j < section.children.size(); ++j) {
        const Node& p = section.children[j];
        if (!p.is_list || p.children.empty()) fail(p, "expected predicate declaration");
        PredicateDecl decl;
        decl.name = expect_token(p.children[0], "predicate name");
        if (!is_identifier(decl.name)) fail(p, "invalid predicate name '" + decl.name + "'");
        decl.params = read_typed_list(p.children, 1, true);
        domain.predicates.push_back(std::move(decl));
      }
    } else if (key == ":action") {
      if (section.children.size() < 2) fail(section, "action without name");
      ActionSchema action;
      action.name = expect_token(section.children[1], "action name");
      if (!is_identifier(action.name)) fail(section, "invalid action name '" + action.name + "'");
      for (std::size_t j = 2; j < section.children.size(); j += 2) {
        const std::string& field = expect_token(section.children[j], "action field");
        if (j + 1 >= section.children.size())
          fail(section.children[j], "missing value for " + field);
        const Node& value = section.children[j + 1];
        if (field == ":parameters") {
          if (!value.is_list) fail(value, "expected parameter list");
          action.params = read_typed_list(value.children, 0, true);
        } else if (field == ":precondition") {
          action.precondition = read_conjunction(value);
        } else if (field == ":effect") {
          for (auto& lit : read_conjunction(value)) {
            auto& bucket = lit.positive ? action.add_effects : action.del_effects;
            if (std::find(bucket.begin(), bucket.end(), lit.atom) == bucket.end())
              bucket.push_back(std::move(lit.atom));
          }
        } else {
          fail(section.children[j], "unsupported action field " + field);
        }
      }
      domain.actions.push_back(std::move(action));
    } else {
      fail(section, "unsupported section " + key);
    }
  }
  check_domain(domain);
  return domain;
}

Problem parse_problem(std::string_view text, const Domain& domain) {
  Node root = Reader(text).read_document();
  Problem problem;
  check_header(root, "problem", problem.name);
  for (std::size_t i = 2; i < root.children.size(); ++i) {
    const Node& section = root.children[i];
    if (!section.is_list || section.children.empty())
      fail(section, "expected problem section");
    const std::string& key = expect_token(section.children[0], "section keyword");
    if (key == ":domain") {
      if (section.children.size() != 2) fail(section, "expected (:domain <name>)");
      problem.domain_name = expect_token(section.children[1], "domain name");
    } else if (key == ":objects") {
      for (auto& o : read_typed_list(section.children, 1, false)) {
        if (!problem.objects.emplace(o.name, o.type).second)
          fail(section, "duplicate object '" + o.name + "'");
      }
    } else if (key == ":init") {
      for (std::size_t j = 1; j < section.children.size(); ++j) {
        const Node& a = section.children[j];
        if (a.is_list && !a.children.empty() && is_keyword(a.children[0], "not"))
          fail(a, "negative literals are not allowed in :init");
        problem.init.insert(read_atom(a));
      }
    } else if (key == ":goal") {
      if (section.children.size() != 2) fail(section, "expected (:goal <formula>)");
      problem.goal = read_conjunction(section.children[1]);
    } else if (key == ":requirements") {
      continue;
    } else {
      fail(section, "unsupported section " + key);
    }
  }
  if (problem.domain_name.empty()) fail(root, "problem lacks (:domain ...)");
  check_problem(problem, domain);
  return problem;
}

Literal parse_literal(std::string_view text) {
  Node node = Reader(text).read_document();
  return read_literal(node);
}

Problem with_init(const Problem& problem, State init) {
  Problem out = problem;
  out.init = std::move(init);
  return out;
}

// ---------------------------------------------------------------------------
// Grounding and transition

namespace {

std::string substitute(const std::string& term,
                       const std::map<std::string, std::string>& binding) {
  if (term.empty() || term[0] != '?') return term;
  return binding.at(term);
}

Atom substitute(const Atom& atom,
                const std::map<std::string, std::string>& binding) {
  Atom out{atom.predicate, {}};
  out.args.reserve(atom.args.size());
  for (const auto& t : atom.args) out.args.push_back(substitute(t, binding));
  return out;
}

GroundAction make_ground(const ActionSchema& schema,
                         const std::vector<std::string>& args) {
  std::map<std::string, std::string> binding;
  for (std::size_t i = 0; i < schema.params.size(); ++i)
    binding.emplace(schema.params[i].name, args[i]);
  GroundAction ga;
  ga.name = schema.name;
  ga.args = args;
  for (const auto& lit : schema.precondition)
    ga.precondition.push_back(Literal{substitute(lit.atom, binding), lit.positive});
  for (const auto& a : schema.add_effects)
    ga.add_effects.push_back(substitute(a, binding));
  for (const auto& a : schema.del_effects)
    ga.del_effects.push_back(substitute(a, binding));
  return ga;
}

}  // namespace

std::vector<GroundAction> ground(const Domain& domain, const Problem& problem) {
  const auto objects = all_objects(domain, problem);
  std::vector<const ActionSchema*> schemas;
  for (const auto& a : domain.actions) schemas.push_back(&a);
  std::sort(schemas.begin(), schemas.end(),
            [](auto* a, auto* b) { return a->name < b->name; });

  std::vector<GroundAction> out;
  for (const ActionSchema* schema : schemas) {
    std::vector<std::vector<std::string>> candidates;
    bool empty = false;
    for (const auto& p : schema->params) {
      std::vector<std::string> c;
      for (const auto& [name, type] : objects)
        if (domain.is_subtype(type, p.type)) c.push_back(name);
      if (c.empty()) empty = true;
      candidates.push_back(std::move(c));
    }
    if (empty) continue;
    // Odometer over the (already sorted) candidate lists.
    std::vector<std::size_t> index(candidates.size(), 0);
    while (true) {
      std::vector<std::string> args;
      args.reserve(index.size());
      for (std::size_t i = 0; i < index.size(); ++i)
        args.push_back(candidates[i][index[i]]);
      out.push_back(make_ground(*schema, args));
      std::ptrdiff_t k = static_cast<std::ptrdiff_t>(index.size()) - 1;
      for (; k >= 0; --k) {
        if (++index[k] < candidates[k].size()) break;
        index[k] = 0;
      }
      if (k < 0) break;
    }
  }
  return out;
}

GroundAction instantiate(const Domain& domain, const Problem& problem,
                         std::string_view action,
                         const std::vector<std::string>& args) {
  const ActionSchema* schema = domain.action(action);
  if (schema == nullptr)
    throw ModelError("unknown action '" + std::string(action) + "'");
  if (schema->params.size() != args.size())
    throw ModelError("action '" + schema->name + "' expects " +
                     std::to_string(schema->params.size()) + " arguments, got " +
                     std::to_string(args.size()));
  const auto objects = all_objects(domain, problem);
  for (std::size_t i = 0; i < args.size(); ++i) {
    auto it = objects.find(args[i]);
    if (it == objects.end())
      throw ModelError("unknown object '" + args[i] + "'");
    if (!domain.is_subtype(it->second, schema->params[i].type))
      throw ModelError("object '" + args[i] + "' of type '" + it->second +
                       "' does not fit parameter " + schema->params[i].name +
                       " - " + schema->params[i].type + " of '" + schema->name + "'");
  }
  return make_ground(*schema, args);
}

bool holds(const State& state, const Literal& literal) {
  return state.contains(literal.atom) == literal.positive;
}

bool satisfies(const State& state, const std::vector<Literal>& conjunction) {
  return std::all_of(conjunction.begin(), conjunction.end(),
                     [&](const Literal& l) { return holds(state, l); });
}

bool applicable(const State& state, const GroundAction& action) {
  return satisfies(state, action.precondition);
}

State apply(const State& state, const GroundAction& action) {
  if (!applicable(state, action))
    throw std::logic_error("action " + action.str() + " is not applicable");
  State next = state;
  for (const auto& a : action.del_effects) next.erase(a);
  for (const auto& a : action.add_effects) next.insert(a);
  return next;
}

// ---------------------------------------------------------------------------
// Patches

bool has_patch(const Domain& domain, const KnowledgePatch& patch) {
  const ActionSchema* schema = domain.action(patch.action);
  if (schema == nullptr) return false;
  if (patch.kind == PatchKind::kAddPrecondition)
    return std::find(schema->precondition.begin(), schema->precondition.end(),
                     patch.literal) != schema->precondition.end();
  const auto& bucket =
      patch.literal.positive ? schema->add_effects : schema->del_effects;
  return std::find(bucket.begin(), bucket.end(), patch.literal.atom) !=
         bucket.end();
}

Domain apply_patch(const Domain& domain, const KnowledgePatch& patch) {
  if (domain.action(patch.action) == nullptr)
    throw ModelError("patch names unknown action '" + patch.action + "'");
  if (domain.predicate(patch.literal.atom.predicate) == nullptr)
    throw ModelError("patch literal uses unknown predicate '" +
                     patch.literal.atom.predicate + "'");
  Domain out = domain;
  for (const auto& [name, type] : patch.constants) {
    auto existing = constant_type(out, name);
    if (existing) {
      if (*existing != type)
        throw ModelError("patch redeclares constant '" + name + "' as '" + type + "'");
      continue;
    }
    out.constants.push_back(TypedName{name, type});
  }
  ActionSchema* schema = nullptr;
  for (auto& a : out.actions)
    if (a.name == patch.action) schema = &a;
  if (patch.kind == PatchKind::kAddPrecondition) {
    if (std::find(schema->precondition.begin(), schema->precondition.end(),
                  patch.literal) == schema->precondition.end())
      schema->precondition.push_back(patch.literal);
  } else {
    auto& bucket = patch.literal.positive ? schema->add_effects : schema->del_effects;
    if (std::find(bucket.begin(), bucket.end(), patch.literal.atom) == bucket.end())
      bucket.push_back(patch.literal.atom);
  }
  check_domain(out);
  return out;
}

Domain strip_preconditions(const Domain& domain,
                           const std::set<std::string>& predicates) {
  Domain out = domain;
  for (auto& a : out.actions) {
    std::erase_if(a.precondition, [&](const Literal& l) {
      return predicates.contains(l.atom.predicate);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Printing

namespace {

void print_typed(std::ostream& os, const std::vector<TypedName>& names) {
  // Group consecutive names sharing a type: "a b - t".
  for (std::size_t i = 0; i < names.size();) {
    std::size_t j = i;
    while (j < names.size() && names[j].type == names[i].type) ++j;
    for (std::size_t k = i; k < j; ++k) os << (k == 0 ? "" : " ") << names[k].name;
    os << " - " << names[i].type;
    i = j;
  }
}

void print_conjunction(std::ostream& os, const std::vector<Literal>& lits) {
  if (lits.empty()) {
    os << "()";
    return;
  }
  os << "(and";
  for (const auto& l : lits) os << " " << l.str();
  os << ")";
}

}  // namespace

std::string to_pddl(const Domain& domain) {
  std::ostringstream os;
  os << "(define (domain " << domain.name << ")\n";
  if (!domain.requirements.empty()) {
    os << "  (:requirements";
    for (const auto& r : domain.requirements) os << " " << r;
    os << ")\n";
  }
  if (!domain.types.empty()) {
    os << "  (:types";
    for (const auto& [child, parent] : domain.types) os << " " << child << " - " << parent;
    os << ")\n";
  }
  if (!domain.constants.empty()) {
    os << "  (:constants ";
    print_typed(os, domain.constants);
    os << ")\n";
  }
  os << "  (:predicates";
  for (const auto& p : domain.predicates) {
    os << "\n    (" << p.name;
    if (!p.params.empty()) {
      os << " ";
      print_typed(os, p.params);
    }
    os << ")";
  }
  os << ")\n";
  for (const auto& a : domain.actions) {
    os << "  (:action " << a.name << "\n    :parameters (";
    print_typed(os, a.params);
    os << ")\n    :precondition ";
    print_conjunction(os, a.precondition);
    std::vector<Literal> effects;
    for (const auto& e : a.add_effects) effects.push_back(Literal{e, true});
    for (const auto& e : a.del_effects) effects.push_back(Literal{e, false});
    os << "\n    :effect ";
    print_conjunction(os, effects);
    os << ")\n";
  }
  os << ")\n";
  return os.str();
}

std::string to_pddl(const Problem& problem) {
  std::ostringstream os;
  os << "(define (problem " << problem.name << ")\n";
  os << "  (:domain " << problem.domain_name << ")\n";
  os << "  (:objects";
  std::map<std::string, std::vector<std::string>> by_type;
  for (const auto& [name, type] : problem.objects) by_type[type].push_back(name);
  for (const auto& [type, names] : by_type) {
    os << "\n   ";
    for (const auto& n : names) os << " " << n;
    os << " - " << type;
  }
  os << ")\n  (:init";
  for (const auto& a : problem.init) os << "\n    " << a.str();
  os << ")\n  (:goal ";
  print_conjunction(os, problem.goal);
  os << "))\n";
  return os.str();
}

}  // namespace cowp::pddl
