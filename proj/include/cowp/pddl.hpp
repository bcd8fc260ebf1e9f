#pragma once

// Typed STRIPS model: parsing, validation, grounding, state transition and
// runtime knowledge patches.
//
// Supported subset: :strips, :typing, :negative-preconditions. Identifiers are
// case-insensitive and normalized to lower case.

#include <compare>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cowp::pddl {

inline constexpr std::string_view kRootType = "object";

/// Raised for malformed PDDL text. Carries the 1-based source position.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line, std::size_t column);

  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

/// Raised when a well-formed model violates a semantic invariant (unknown
/// predicate, arity mismatch, duplicate name, ...).
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A predicate applied to terms. Terms starting with '?' are variables,
/// anything else is an object or constant name.
struct Atom {
  std::string predicate;
  std::vector<std::string> args;

  std::string str() const;
  auto operator<=>(const Atom&) const = default;
};

struct Literal {
  Atom atom;
  bool positive = true;

  std::string str() const;
  auto operator<=>(const Literal&) const = default;
};

struct TypedName {
  std::string name;
  std::string type{kRootType};

  auto operator<=>(const TypedName&) const = default;
};

struct PredicateDecl {
  std::string name;
  std::vector<TypedName> params;

  bool operator==(const PredicateDecl&) const = default;
};

struct ActionSchema {
  std::string name;
  std::vector<TypedName> params;
  std::vector<Literal> precondition;
  std::vector<Atom> add_effects;
  std::vector<Atom> del_effects;

  const TypedName* param(std::string_view variable) const;
  bool operator==(const ActionSchema&) const = default;
};

struct Domain {
  std::string name;
  std::vector<std::string> requirements;
  // child -> parent; every chain ends at kRootType.
  std::map<std::string, std::string> types;
  std::vector<TypedName> constants;
  std::vector<PredicateDecl> predicates;
  std::vector<ActionSchema> actions;

  const PredicateDecl* predicate(std::string_view name) const;
  const ActionSchema* action(std::string_view name) const;
  bool has_type(std::string_view type) const;
  bool is_subtype(std::string_view type, std::string_view ancestor) const;
  bool operator==(const Domain&) const = default;
};

/// Set of ground atoms under closed-world semantics.
class State {
 public:
  State() = default;
  explicit State(std::set<Atom> atoms) : atoms_(std::move(atoms)) {}

  bool contains(const Atom& atom) const { return atoms_.contains(atom); }
  void insert(Atom atom) { atoms_.insert(std::move(atom)); }
  void erase(const Atom& atom) { atoms_.erase(atom); }
  std::size_t size() const { return atoms_.size(); }
  bool empty() const { return atoms_.empty(); }

  auto begin() const { return atoms_.begin(); }
  auto end() const { return atoms_.end(); }
  const std::set<Atom>& atoms() const { return atoms_; }

  bool operator==(const State&) const = default;

 private:
  std::set<Atom> atoms_;
};

struct Problem {
  std::string name;
  std::string domain_name;
  std::map<std::string, std::string> objects;  // name -> type
  State init;
  std::vector<Literal> goal;

  bool operator==(const Problem&) const = default;
};

struct GroundAction {
  std::string name;
  std::vector<std::string> args;
  std::vector<Literal> precondition;
  std::vector<Atom> add_effects;
  std::vector<Atom> del_effects;

  /// "(name arg1 arg2 ...)"
  std::string str() const;
  auto operator<=>(const GroundAction& other) const {
    if (auto c = name <=> other.name; c != 0) return c;
    return args <=> other.args;
  }
  bool operator==(const GroundAction& other) const {
    return name == other.name && args == other.args;
  }
};

enum class PatchKind { kAddPrecondition, kAddEffect };

/// A structural edit to one action schema. Literal terms are either variables
/// of the action or constants; constants not yet known to the domain are
/// declared through `constants` (name -> type).
struct KnowledgePatch {
  PatchKind kind = PatchKind::kAddPrecondition;
  std::string action;
  Literal literal;
  std::map<std::string, std::string> constants;

  std::string str() const;
  bool operator==(const KnowledgePatch&) const = default;
};

Domain parse_domain(std::string_view text);
Problem parse_problem(std::string_view text, const Domain& domain);

/// Throws ModelError on the first invariant violation.
void check_domain(const Domain& domain);
void check_problem(const Problem& problem, const Domain& domain);

/// Domain constants merged with problem objects; throws ModelError if a name
/// is declared with two different types.
std::map<std::string, std::string> all_objects(const Domain& domain,
                                               const Problem& problem);

/// Every type-consistent instantiation, ordered by action name then argument
/// tuple.
std::vector<GroundAction> ground(const Domain& domain, const Problem& problem);

/// Instantiates one action by name. Throws ModelError on unknown action, wrong
/// arity, unknown object or a type mismatch.
GroundAction instantiate(const Domain& domain, const Problem& problem,
                         std::string_view action,
                         const std::vector<std::string>& args);

bool holds(const State& state, const Literal& literal);
bool satisfies(const State& state, const std::vector<Literal>& conjunction);
bool applicable(const State& state, const GroundAction& action);

/// (state \ del) ∪ add. Throws std::logic_error if the action is not
/// applicable.
State apply(const State& state, const GroundAction& action);

/// Returns a patched copy; re-applying an identical patch is a no-op.
Domain apply_patch(const Domain& domain, const KnowledgePatch& patch);
bool has_patch(const Domain& domain, const KnowledgePatch& patch);

/// Removes every precondition literal over the listed predicates.
Domain strip_preconditions(const Domain& domain,
                           const std::set<std::string>& predicates);

/// Canonical pretty printers; parse(to_pddl(x)) == x.
std::string to_pddl(const Domain& domain);
std::string to_pddl(const Problem& problem);

/// Parses "(pred a b)" or "(not (pred a b))".
Literal parse_literal(std::string_view text);

/// Same problem with a replaced initial state.
Problem with_init(const Problem& problem, State init);

std::string lowercase(std::string_view text);

}  // namespace cowp::pddl
