#include "cowp/simworld.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "cowp/util.hpp"

namespace cowp::sim {

using json = nlohmann::ordered_json;

namespace {

json parse_json(std::string_view text, std::string_view what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw SimError(std::string(what) + " is not valid JSON: " + e.what());
  }
}

void check_schema(const json& doc, int expected, std::string_view what) {
  if (!doc.is_object() || !doc.contains("schema_version"))
    throw SimError(std::string(what) + ": missing schema_version");
  if (doc["schema_version"].get<int>() != expected)
    throw SimError(std::string(what) + ": unsupported schema_version " +
                   doc["schema_version"].dump());
}

std::string load_file(const std::filesystem::path& path) {
  try {
    return read_text(path);
  } catch (const std::runtime_error& e) {
    throw SimError(e.what());
  }
}

pddl::Atom parse_atom(const std::string& text) {
  pddl::Literal l = pddl::parse_literal(text);
  if (!l.positive) throw SimError("expected a positive atom: " + text);
  return l.atom;
}

std::vector<pddl::Atom> parse_atoms(const json& list) {
  std::vector<pddl::Atom> out;
  for (const auto& s : list) out.push_back(parse_atom(s.get<std::string>()));
  return out;
}

json atoms_json(const std::vector<pddl::Atom>& atoms) {
  json out = json::array();
  for (const auto& a : atoms) out.push_back(a.str());
  return out;
}

pddl::Atom substitute(pddl::Atom atom, std::string_view var, std::string_view value) {
  for (auto& a : atom.args)
    if (a == var) a = value;
  return atom;
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j[key].get<T>() : fallback;
}

}  // namespace

// ---------------------------------------------------------------------------

const std::vector<std::string>& ObjectLibrary::categories() {
  static const std::vector<std::string> names{"utensil", "appliance", "furniture", "food", "beverage"};
  return names;
}

ObjectLibrary ObjectLibrary::from_json_text(std::string_view text) {
  json doc = parse_json(text, "object library");
  check_schema(doc, 1, "object library");
  ObjectLibrary lib;
  std::set<std::string> seen;
  for (const auto& e : doc.at("objects")) {
    LibraryEntry entry{e.at("name").get<std::string>(), e.at("category").get<std::string>()};
    const auto& cats = categories();
    if (std::find(cats.begin(), cats.end(), entry.category) == cats.end())
      throw SimError("object library: unknown category '" + entry.category + "'");
    if (!seen.insert(entry.name).second)
      throw SimError("object library: duplicate object '" + entry.name + "'");
    lib.entries_.push_back(std::move(entry));
  }
  return lib;
}

ObjectLibrary ObjectLibrary::load(const std::filesystem::path& path) {
  return from_json_text(load_file(path));
}

bool ObjectLibrary::contains(std::string_view kind) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.name == kind; });
}

const std::string& ObjectLibrary::category_of(std::string_view kind) const {
  for (const auto& e : entries_)
    if (e.name == kind) return e.category;
  throw SimError("object library has no '" + std::string(kind) + "'");
}

std::map<std::string, std::size_t> ObjectLibrary::category_counts() const {
  std::map<std::string, std::size_t> out;
  for (const auto& e : entries_) ++out[e.category];
  return out;
}

// ---------------------------------------------------------------------------

const std::vector<std::string>& task_names() {
  static const std::vector<std::string> names{"drinking_water",   "setting_table",  "drinking_coke",
                                              "preparing_burger", "cleaning_floor", "washing_plate"};
  return names;
}

std::string spawned_object_name(std::string_view kind) { return std::string(kind) + "_0"; }

pddl::Domain TaskBundle::physics() const {
  return pddl::strip_preconditions(domain, knowledge_predicates);
}

const OptionalGroup* TaskBundle::group_of(std::string_view kind) const {
  for (const auto& g : optional)
    if (std::find(g.kinds.begin(), g.kinds.end(), kind) != g.kinds.end()) return &g;
  return nullptr;
}

std::string TaskBundle::kind_of(std::string_view object) const {
  if (auto it = bindings.find(std::string(object)); it != bindings.end()) return it->second;
  if (object.size() > 2 && object.substr(object.size() - 2) == "_0") {
    std::string_view kind = object.substr(0, object.size() - 2);
    if (group_of(kind)) return std::string(kind);
  }
  return "";
}

TaskBundle load_task(const std::filesystem::path& data_dir, std::string_view name) {
  const auto dir = data_dir / "tasks" / std::string(name);
  if (!std::filesystem::is_directory(dir)) throw SimError("no bundled task '" + std::string(name) + "'");

  TaskBundle t;
  try {
    t.domain = pddl::parse_domain(load_file(dir / "domain.pddl"));
    pddl::check_domain(t.domain);
    t.problem = pddl::parse_problem(load_file(dir / "problem.pddl"), t.domain);
    pddl::check_problem(t.problem, t.domain);
  } catch (const pddl::ParseError& e) {
    throw SimError(std::string(name) + ": " + e.what());
  } catch (const pddl::ModelError& e) {
    throw SimError(std::string(name) + ": " + e.what());
  }

  json doc = parse_json(load_file(dir / "task.json"), "task.json");
  check_schema(doc, TaskBundle::kSchemaVersion, "task.json");
  const std::string where = std::string(name) + "/task.json: ";
  t.name = doc.at("name").get<std::string>();
  if (t.name != name) throw SimError(where + "name mismatch");
  t.task_phrase = doc.at("task_phrase").get<std::string>();
  t.required_kinds = doc.at("required_kinds").get<std::vector<std::string>>();
  t.bindings = doc.at("bindings").get<std::map<std::string, std::string>>();
  for (const auto& p : doc.at("knowledge_predicates")) t.knowledge_predicates.insert(p.get<std::string>());

  for (const auto& g : get_or(doc, "optional", json::array()))
    t.optional.push_back({g.at("kinds").get<std::vector<std::string>>(), g.at("type").get<std::string>(),
                          g.at("init").get<std::vector<std::string>>()});

  std::vector<oracle::ActionPhrase> phrases;
  for (const auto& p : doc.at("phrases"))
    phrases.push_back({p.at("action").get<std::string>(), p.at("surface").get<std::string>(),
                       get_or<std::string>(p, "connective", "to"), get_or<std::string>(p, "preposition", "with")});
  t.phrases = oracle::PhraseTable(std::move(phrases));

  for (const auto& r : doc.at("precondition_map"))
    t.precondition_map.push_back({r.at("predicate").get<std::string>(), get_or<std::string>(r, "object", ""),
                                  get_or<std::string>(r, "type", ""), r.at("action").get<std::string>(),
                                  r.at("param").get<std::string>()});

  for (const auto& e : doc.at("effect_table")) {
    EffectEntry entry;
    entry.replaces = e.at("replaces").get<std::vector<std::string>>();
    entry.action = e.at("action").get<std::string>();
    entry.literal = e.at("literal").get<std::string>();
    entry.kinds = e.at("kinds").get<std::vector<std::string>>();
    const auto& q = e.at("query");
    entry.query_action = q.at("action").get<std::string>();
    entry.query_connective = get_or<std::string>(q, "connective", "to");
    entry.query_preposition = get_or<std::string>(q, "preposition", "with");
    entry.task = e.at("task").get<std::string>();
    t.effect_table.push_back(std::move(entry));
  }

  // Cross-checks against the domain.
  try {
    t.phrases.check_covers(t.domain);
  } catch (const oracle::OracleError& e) {
    throw SimError(where + e.what());
  }
  for (const auto& [object, kind] : t.bindings) {
    if (!t.problem.objects.contains(object)) throw SimError(where + "binding for unknown object " + object);
    if (std::find(t.required_kinds.begin(), t.required_kinds.end(), kind) == t.required_kinds.end())
      throw SimError(where + "bound kind " + kind + " is not required");
  }
  for (const auto& p : t.knowledge_predicates)
    if (!t.domain.predicate(p)) throw SimError(where + "unknown knowledge predicate " + p);
  for (const auto& g : t.optional) {
    if (!t.domain.has_type(g.type)) throw SimError(where + "unknown type " + g.type);
    for (const auto& a : g.init) {
      pddl::Atom atom = parse_atom(a);
      if (!t.domain.predicate(atom.predicate)) throw SimError(where + "unknown predicate in " + a);
    }
  }
  for (const auto& r : t.precondition_map) {
    const auto* schema = t.domain.action(r.action);
    if (!schema || !schema->param(r.param))
      throw SimError(where + "precondition rule names " + r.action + " " + r.param);
    if (r.object.empty() == r.type.empty())
      throw SimError(where + "precondition rule needs exactly one of object/type");
  }
  for (const auto& e : t.effect_table) {
    if (!t.domain.action(e.action)) throw SimError(where + "effect entry names unknown action " + e.action);
    pddl::Atom lit = parse_atom(e.literal);
    if (!t.domain.predicate(lit.predicate)) throw SimError(where + "unknown predicate in " + e.literal);
    for (const auto& k : e.kinds)
      if (!t.group_of(k)) throw SimError(where + "effect kind " + k + " is not optional");
    for (const auto& o : e.replaces)
      if (!t.problem.objects.contains(o)) throw SimError(where + "effect replaces unknown object " + o);
  }

  auto plan = planner::plan(t.domain, t.problem);
  if (!plan) throw SimError(std::string(name) + ": bundled problem has no plan");
  t.reference_plan = std::move(*plan);
  return t;
}

// ---------------------------------------------------------------------------

std::set<std::string> SituationReport::objects() const {
  std::set<std::string> out;
  for (const auto* list : {&added, &removed})
    for (const auto& a : *list) out.insert(a.args.begin(), a.args.end());
  return out;
}

std::size_t DatasetStats::total() const {
  std::size_t n = 0;
  for (const auto& [_, cats] : counts)
    for (const auto& [__, c] : cats) n += c;
  return n;
}

std::string DatasetStats::to_json() const {
  json doc;
  doc["schema_version"] = 1;
  doc["total"] = total();
  json tasks = json::object();
  for (const auto& [task, cats] : counts) {
    std::size_t n = 0;
    json c = json::object();
    for (const auto& [cat, k] : cats) {
      c[cat] = k;
      n += k;
    }
    tasks[task] = {{"total", n}, {"distinct_categories", cats.size()}, {"categories", c}};
  }
  doc["tasks"] = tasks;
  return doc.dump(2) + "\n";
}

SituationDataset::SituationDataset(std::vector<SituationRecord> records) : records_(std::move(records)) {}

SituationDataset SituationDataset::from_json_text(std::string_view text) {
  json doc = parse_json(text, "situation dataset");
  check_schema(doc, kSchemaVersion, "situation dataset");
  std::vector<SituationRecord> records;
  std::set<std::string> ids;
  for (const auto& r : doc.at("records")) {
    SituationRecord rec;
    rec.id = r.at("id").get<std::string>();
    rec.task = r.at("task").get<std::string>();
    rec.step_index = r.at("step_index").get<std::size_t>();
    rec.description = r.at("description").get<std::string>();
    rec.category = r.at("category").get<std::string>();
    rec.object = get_or<std::string>(r, "object", "");
    rec.kind = get_or<std::string>(r, "kind", "");
    rec.add = parse_atoms(get_or(r, "add", json::array()));
    rec.remove = parse_atoms(get_or(r, "remove", json::array()));
    rec.blocks = get_or(r, "blocks", std::vector<std::string>{});
    if (rec.step_index < 1) throw SimError("situation " + rec.id + ": step_index must be >= 1");
    if (!ids.insert(rec.id).second) throw SimError("duplicate situation id " + rec.id);
    records.push_back(std::move(rec));
  }
  return SituationDataset(std::move(records));
}

SituationDataset SituationDataset::load(const std::filesystem::path& path) {
  return from_json_text(load_file(path));
}

std::string SituationDataset::to_json() const {
  json doc;
  doc["schema_version"] = kSchemaVersion;
  json list = json::array();
  for (const auto& r : records_) {
    list.push_back({{"id", r.id},
                    {"task", r.task},
                    {"step_index", r.step_index},
                    {"description", r.description},
                    {"category", r.category},
                    {"object", r.object},
                    {"kind", r.kind},
                    {"add", atoms_json(r.add)},
                    {"remove", atoms_json(r.remove)},
                    {"blocks", r.blocks}});
  }
  doc["records"] = list;
  return doc.dump(2) + "\n";
}

std::vector<const SituationRecord*> SituationDataset::for_task(std::string_view task) const {
  std::vector<const SituationRecord*> out;
  for (const auto& r : records_)
    if (r.task == task) out.push_back(&r);
  return out;
}

const SituationRecord* SituationDataset::find(std::string_view id) const {
  for (const auto& r : records_)
    if (r.id == id) return &r;
  return nullptr;
}

DatasetStats SituationDataset::stats() const {
  DatasetStats s;
  for (const auto& r : records_) ++s.counts[r.task][r.category];
  return s;
}

void SituationDataset::check(std::size_t min_per_task,
                             std::pair<std::size_t, std::size_t> category_bounds) const {
  for (const auto& [task, cats] : stats().counts) {
    std::size_t n = 0;
    for (const auto& [_, k] : cats) n += k;
    if (n < min_per_task)
      throw SimError(task + ": " + std::to_string(n) + " situations, need at least " +
                     std::to_string(min_per_task));
    if (cats.size() < category_bounds.first || cats.size() > category_bounds.second)
      throw SimError(task + ": " + std::to_string(cats.size()) + " distinguishable situations, outside [" +
                     std::to_string(category_bounds.first) + ", " + std::to_string(category_bounds.second) + "]");
  }
}

DatasetSpec DatasetSpec::from_json_text(std::string_view text) {
  json doc = parse_json(text, "dataset spec");
  check_schema(doc, 1, "dataset spec");
  DatasetSpec spec;
  spec.seed = get_or<std::uint64_t>(doc, "seed", 0);
  spec.min_per_task = get_or<std::size_t>(doc, "min_per_task", spec.min_per_task);
  if (doc.contains("category_bounds")) {
    auto b = doc["category_bounds"].get<std::vector<std::size_t>>();
    if (b.size() != 2 || b[0] > b[1]) throw SimError("dataset spec: category_bounds must be [lo, hi]");
    spec.category_bounds = {b[0], b[1]};
  }
  for (const auto& t : doc.at("tasks")) {
    TaskSpec ts;
    ts.task = t.at("task").get<std::string>();
    ts.count = t.at("count").get<std::size_t>();
    for (const auto& c : t.at("categories")) {
      CategorySpec cs;
      cs.name = c.at("name").get<std::string>();
      cs.object = get_or<std::string>(c, "object", "");
      cs.kind = get_or<std::string>(c, "kind", "");
      cs.weight = get_or<double>(c, "weight", 1.0);
      cs.steps = c.at("steps").get<std::vector<std::size_t>>();
      cs.descriptions = c.at("descriptions").get<std::vector<std::string>>();
      cs.add = parse_atoms(get_or(c, "add", json::array()));
      cs.remove = parse_atoms(get_or(c, "remove", json::array()));
      cs.blocks = get_or(c, "blocks", std::vector<std::string>{});
      ts.categories.push_back(std::move(cs));
    }
    spec.tasks.push_back(std::move(ts));
  }
  return spec;
}

DatasetSpec DatasetSpec::load(const std::filesystem::path& path) { return from_json_text(load_file(path)); }

SituationDataset generate_dataset(const DatasetSpec& spec, std::uint64_t seed) {
  std::vector<SituationRecord> records;
  for (const auto& ts : spec.tasks) {
    const auto& cats = ts.categories;
    const std::size_t k = cats.size();
    if (k < spec.category_bounds.first || k > spec.category_bounds.second)
      throw SimError(ts.task + ": spec has " + std::to_string(k) + " categories, outside [" +
                     std::to_string(spec.category_bounds.first) + ", " +
                     std::to_string(spec.category_bounds.second) + "]");
    if (ts.count < spec.min_per_task)
      throw SimError(ts.task + ": target " + std::to_string(ts.count) + " is below " +
                     std::to_string(spec.min_per_task));
    if (ts.count < k) throw SimError(ts.task + ": target smaller than the category count");
    double total_weight = 0;
    for (const auto& c : cats) {
      if (c.steps.empty() || c.descriptions.empty() || !(c.weight > 0))
        throw SimError(ts.task + "/" + c.name + ": needs steps, descriptions and a positive weight");
      if (std::find(c.steps.begin(), c.steps.end(), 0) != c.steps.end())
        throw SimError(ts.task + "/" + c.name + ": steps are 1-based");
      total_weight += c.weight;
    }

    Rng rng(stable_hash(seed, ts.task));
    std::vector<std::size_t> picks(k);
    for (std::size_t i = 0; i < k; ++i) picks[i] = i;
    while (picks.size() < ts.count) {
      double x = rng.uniform() * total_weight;
      std::size_t i = 0;
      for (; i + 1 < k; ++i) {
        if (x < cats[i].weight) break;
        x -= cats[i].weight;
      }
      picks.push_back(i);
    }
    rng.shuffle(picks);

    for (std::size_t n = 0; n < picks.size(); ++n) {
      const auto& c = cats[picks[n]];
      SituationRecord r;
      std::ostringstream id;
      id << ts.task << '-' << std::setw(3) << std::setfill('0') << (n + 1);
      r.id = id.str();
      r.task = ts.task;
      r.step_index = c.steps[rng.index(c.steps.size())];
      r.description = c.descriptions[rng.index(c.descriptions.size())];
      r.category = c.name;
      r.object = c.object;
      r.kind = c.kind;
      r.add = c.add;
      r.remove = c.remove;
      r.blocks = c.blocks;
      records.push_back(std::move(r));
    }
  }
  SituationDataset out(std::move(records));
  out.check(spec.min_per_task, spec.category_bounds);
  return out;
}

// ---------------------------------------------------------------------------

World World::spawn(const ObjectLibrary& library, const TaskBundle& task, std::uint64_t seed) {
  World w;
  w.task_ = &task;
  w.seed_ = seed;
  w.physics_ = task.physics();

  std::set<std::string> chosen;
  for (const auto& k : task.required_kinds) {
    if (!library.contains(k)) throw SimError(task.name + ": required kind " + k + " is not in the library");
    chosen.insert(k);
  }
  if (chosen.size() > kSpawnCount) throw SimError(task.name + ": too many required kinds");
  std::vector<std::string> rest;
  for (const auto& e : library.entries())
    if (!chosen.contains(e.name)) rest.push_back(e.name);
  Rng rng(stable_hash(seed, "spawn"));
  rng.shuffle(rest);
  for (std::size_t i = 0; chosen.size() < kSpawnCount && i < rest.size(); ++i) chosen.insert(rest[i]);
  w.spawned_.assign(chosen.begin(), chosen.end());

  w.problem_ = task.problem;
  for (const auto& g : task.optional) {
    for (const auto& kind : g.kinds) {
      if (!chosen.contains(kind)) continue;
      const std::string obj = spawned_object_name(kind);
      w.problem_.objects.emplace(obj, g.type);
      for (const auto& a : g.init) w.problem_.init.insert(substitute(parse_atom(a), "?o", obj));
    }
  }
  pddl::check_problem(w.problem_, task.domain);
  w.state_ = w.problem_.init;
  return w;
}

bool World::is_spawned(std::string_view kind) const {
  return std::binary_search(spawned_.begin(), spawned_.end(), kind, std::less<>());
}

void World::inject(const SituationRecord& record, std::size_t plan_length) {
  if (!task_ || record.task != task_->name)
    throw SimError("situation " + record.id + " belongs to task " + record.task);
  for (const auto* list : {&record.add, &record.remove}) {
    for (const auto& a : *list) {
      const auto* decl = task_->domain.predicate(a.predicate);
      if (!decl || decl->params.size() != a.args.size())
        throw SimError("situation " + record.id + ": bad atom " + a.str());
      for (const auto& o : a.args)
        if (!problem_.objects.contains(o)) throw SimError("situation " + record.id + ": unknown object " + o);
    }
  }
  situation_ = record;
  situation_step_ = std::clamp<std::size_t>(record.step_index, 1, std::max<std::size_t>(plan_length, 1));
  applied_ = false;
}

std::optional<SituationReport> World::execute(const pddl::GroundAction& action) {
  const std::size_t step = trace_.size() + 1;
  pddl::GroundAction phys;
  try {
    phys = pddl::instantiate(physics_, problem_, action.name, action.args);
  } catch (const pddl::ModelError& e) {
    throw ExecutionFailure("step " + std::to_string(step) + ": " + e.what());
  }
  if (!pddl::applicable(state_, phys))
    throw ExecutionFailure("step " + std::to_string(step) + ": " + action.str() + " is not applicable");
  state_ = pddl::apply(state_, phys);
  // Knowledge effects learned at run time ride along with the physical ones.
  for (const auto& a : action.add_effects) state_.insert(a);
  trace_.push_back(action);

  if (!situation_ || applied_ || step != *situation_step_) return std::nullopt;
  for (const auto& a : situation_->remove) state_.erase(a);
  for (const auto& a : situation_->add) state_.insert(a);
  applied_ = true;
  return SituationReport{situation_->description, situation_->add, situation_->remove};
}

}  // namespace cowp::sim
