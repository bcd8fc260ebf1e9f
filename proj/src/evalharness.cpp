#include "cowp/evalharness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "cowp/util.hpp"

namespace cowp::eval {

using json = nlohmann::ordered_json;

std::string_view method_name(Method m) {
  switch (m) {
    case Method::kCowp: return "cowp";
    case Method::kCw: return "cw";
    case Method::kEk: return "ek";
    case Method::kLm: return "lm";
  }
  return "?";
}

Method method_from_name(std::string_view name) {
  const std::string n = pddl::lowercase(name);
  for (Method m : {Method::kCowp, Method::kCw, Method::kEk, Method::kLm})
    if (method_name(m) == n) return m;
  throw EvalError("unknown method '" + std::string(name) + "' (expected cowp, cw, ek or lm)");
}

// ---------------------------------------------------------------------------

namespace {

std::string label_key(std::string_view task, std::string_view category, std::string_view resolution) {
  return std::string(task) + "|" + std::string(category) + "|" + std::string(resolution);
}

}  // namespace

GroundTruthLabels GroundTruthLabels::from_json_text(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw EvalError(std::string("label file is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || doc.value("schema_version", 0) != kSchemaVersion)
    throw EvalError("label file: unsupported or missing schema_version");
  GroundTruthLabels labels;
  for (const auto& e : doc.at("entries")) {
    const std::string label = e.at("label").get<std::string>();
    if (label != "valid" && label != "invalid") throw EvalError("label file: bad label '" + label + "'");
    labels.set(e.at("task").get<std::string>(), e.at("category").get<std::string>(),
               e.at("resolution").get<std::string>(), label == "valid" ? Label::kValid : Label::kInvalid);
  }
  return labels;
}

GroundTruthLabels GroundTruthLabels::load(const std::filesystem::path& path) {
  try {
    return from_json_text(read_text(path));
  } catch (const EvalError&) {
    throw;
  } catch (const std::exception& e) {
    throw EvalError(e.what());
  }
}

void GroundTruthLabels::set(std::string task, std::string category, std::string resolution, Label label) {
  entries_[label_key(task, category, resolution)] = label;
}

std::optional<Label> GroundTruthLabels::find(std::string_view task, std::string_view category,
                                             std::string_view resolution) const {
  for (const auto& key : {label_key(task, category, resolution), label_key(task, category, "*"),
                          label_key(task, "*", resolution), label_key("*", "*", resolution)}) {
    if (auto it = entries_.find(key); it != entries_.end()) return it->second;
  }
  return std::nullopt;
}

Label GroundTruthLabels::at(std::string_view task, std::string_view category, std::string_view resolution) const {
  if (auto l = find(task, category, resolution)) return *l;
  throw EvalError("no label for (" + std::string(task) + ", " + std::string(category) + ", " +
                  std::string(resolution) + ")");
}

std::vector<std::string> resolution(const std::vector<pddl::GroundAction>& trace,
                                    const sim::SituationRecord* situation,
                                    std::optional<std::size_t> situation_step, const sim::TaskBundle& task) {
  std::vector<std::string> keys;
  if (!situation || !situation_step) {
    keys.push_back("none");
  } else {
    bool unhandled = false;
    for (std::size_t i = *situation_step; i < trace.size() && !unhandled; ++i) {
      const auto& a = trace[i];
      const auto& blocks = situation->blocks;
      unhandled = !situation->object.empty() &&
                  std::find(blocks.begin(), blocks.end(), a.name) != blocks.end() &&
                  std::find(a.args.begin(), a.args.end(), situation->object) != a.args.end();
    }
    keys.push_back(unhandled ? "unhandled" : "avoided");
  }
  std::set<std::string> substitutes;
  for (const auto& a : trace)
    for (const auto& arg : a.args) {
      if (task.problem.objects.contains(arg)) continue;
      if (auto kind = task.kind_of(arg); !kind.empty()) substitutes.insert("substitute:" + kind);
    }
  keys.insert(keys.end(), substitutes.begin(), substitutes.end());
  return keys;
}

bool adjudicate(const controller::Outcome& outcome, bool goal_satisfied, const std::vector<std::string>& keys,
                std::string_view task, std::string_view category, const GroundTruthLabels& labels) {
  if (!outcome.completed() || !goal_satisfied) return false;
  bool ok = true;
  for (const auto& k : keys) ok = (labels.at(task, category, k) == Label::kValid) && ok;
  return ok;
}

// ---------------------------------------------------------------------------

ExperimentConfig ExperimentConfig::from_json_text(std::string_view text, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw EvalError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || doc.value("schema_version", 0) != 1)
    throw EvalError("config: unsupported or missing schema_version");
  static const std::set<std::string> known{
      "schema_version", "tasks",      "methods", "trials_per_task", "master_seed",     "data_dir",
      "dataset",        "labels",     "kb",      "ek_store",        "backend",         "cassette",
      "record",         "llm",        "workers", "patch_cap",       "lm_max_attempts"};
  for (const auto& [key, _] : doc.items())
    if (!known.contains(key)) throw EvalError("config: unknown key '" + key + "'");

  ExperimentConfig c;
  auto path = [&](const char* key, const std::filesystem::path& fallback) -> std::filesystem::path {
    if (!doc.contains(key)) return fallback;
    std::filesystem::path p = doc[key].get<std::string>();
    return p.is_absolute() ? p : (base_dir / p).lexically_normal();
  };
  try {
    c.tasks = doc.value("tasks", sim::task_names());
    if (doc.contains("methods")) {
      c.methods.clear();
      for (const auto& m : doc["methods"]) c.methods.push_back(method_from_name(m.get<std::string>()));
    }
    c.trials_per_task = doc.value("trials_per_task", c.trials_per_task);
    c.master_seed = doc.value("master_seed", c.master_seed);
    c.data_dir = path("data_dir", COWP_DATA_DIR);
    c.dataset = path("dataset", c.data_dir / "situations.json");
    c.labels = path("labels", c.data_dir / "labels.json");
    c.kb = path("kb", c.data_dir / "kb.json");
    c.ek_store = path("ek_store", c.data_dir / "ek_store.json");
    c.backend = doc.value("backend", c.backend);
    c.cassette = path("cassette", "");
    c.record = doc.value("record", false);
    if (doc.contains("llm")) {
      const auto& l = doc["llm"];
      c.llm.model = l.value("model", c.llm.model);
      c.llm.endpoint = l.value("endpoint", c.llm.endpoint);
      c.llm.api_key_env = l.value("api_key_env", c.llm.api_key_env);
      c.llm.max_in_flight = l.value("max_in_flight", c.llm.max_in_flight);
      c.llm.timeout_seconds = l.value("timeout_seconds", c.llm.timeout_seconds);
    }
    c.lm_max_attempts = doc.value("lm_max_attempts", c.lm_max_attempts);
    c.patch_cap = doc.value("patch_cap", c.patch_cap);
    c.workers = doc.value("workers", c.workers);
  } catch (const json::exception& e) {
    throw EvalError(std::string("config: ") + e.what());
  }
  if (c.trials_per_task < 1) throw EvalError("config: trials_per_task must be at least 1");
  if (c.lm_max_attempts < 1) throw EvalError("config: lm_max_attempts must be at least 1");
  if (c.methods.empty()) throw EvalError("config: no methods");
  if (c.tasks.empty()) throw EvalError("config: no tasks");
  for (const auto& t : c.tasks) {
    const auto& names = sim::task_names();
    if (std::find(names.begin(), names.end(), t) == names.end()) throw EvalError("config: unknown task '" + t + "'");
  }
  if (c.backend != "scripted" && c.backend != "llm")
    throw EvalError("config: backend must be 'scripted' or 'llm'");
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text(path);
  } catch (const std::exception& e) {
    throw EvalError(e.what());
  }
  return from_json_text(text, path.parent_path());
}

Resources Resources::load(const ExperimentConfig& config) {
  Resources r;
  r.llm = config.llm;
  try {
    r.library = sim::ObjectLibrary::load(config.data_dir / "objects.json");
    for (const auto& t : config.tasks) {
      r.tasks.emplace(t, sim::load_task(config.data_dir, t));
      r.proposals.emplace(t, baselines::load_proposals(config.data_dir / "tasks" / t / "proposals.txt"));
      if (r.proposals[t].empty()) throw EvalError(t + ": no plan proposals");
    }
    r.dataset = sim::SituationDataset::load(config.dataset);
    r.labels = GroundTruthLabels::load(config.labels);
    r.ek_store = baselines::EkStore::load(config.ek_store);
    if (config.backend == "scripted") {
      r.backend = std::make_shared<oracle::ScriptedKB>(oracle::ScriptedKB::load(config.kb));
    } else {
      std::shared_ptr<oracle::CompletionTransport> transport = std::make_shared<oracle::HttpTransport>();
      if (!config.cassette.empty())
        transport = std::make_shared<oracle::Cassette>(
            config.cassette, config.record ? oracle::Cassette::Mode::kRecord : oracle::Cassette::Mode::kReplay,
            config.record ? transport : nullptr);
      r.transport = transport;
      r.backend = std::make_shared<oracle::LlmBackend>(r.llm, transport);
    }
  } catch (const EvalError&) {
    throw;
  } catch (const std::exception& e) {
    throw EvalError(e.what());
  }
  for (const auto& t : config.tasks)
    if (r.dataset.for_task(t).empty()) throw EvalError("dataset has no situations for " + t);
  r.lm_max_attempts = config.lm_max_attempts;
  r.patch_cap = config.patch_cap;
  return r;
}

const sim::TaskBundle& Resources::task(std::string_view name) const {
  auto it = tasks.find(std::string(name));
  if (it == tasks.end()) throw EvalError("task not loaded: " + std::string(name));
  return it->second;
}

std::uint64_t trial_seed(std::uint64_t master_seed, std::string_view task, std::size_t trial) {
  return stable_hash(master_seed, task, static_cast<std::uint64_t>(trial));
}

const sim::SituationRecord& sample_situation(const sim::SituationDataset& dataset, std::string_view task,
                                             std::uint64_t seed) {
  auto pool = dataset.for_task(task);
  if (pool.empty()) throw EvalError("no situations for " + std::string(task));
  Rng rng(stable_hash(seed, "situation"));
  return *pool[rng.index(pool.size())];
}

TrialResult run_trial(const Resources& res, std::string_view task, std::size_t trial, std::uint64_t seed,
                      const sim::SituationRecord& situation, Method method, controller::Outcome* outcome) {
  const auto start = std::chrono::steady_clock::now();
  TrialResult r;
  r.task = task;
  r.trial = trial;
  r.seed = seed;
  r.method = method;
  r.situation = situation.id;
  r.category = situation.category;
  r.object = situation.kind;
  try {
    const auto& t = res.task(task);
    auto world = sim::World::spawn(res.library, t, seed);
    world.inject(situation, t.reference_plan.cost());
    controller::Outcome o;
    switch (method) {
      case Method::kCowp: {
        controller::Options opts;
        opts.patch_cap = res.patch_cap;
        o = controller::run(t, world, *res.backend, opts);
        break;
      }
      case Method::kCw:
        o = baselines::cw_run(t, world);
        break;
      case Method::kEk:
        o = baselines::ek_run(t, world, res.ek_store, baselines::ek_coverage(res.library, stable_hash(seed, "ek")));
        break;
      case Method::kLm: {
        std::unique_ptr<baselines::Proposer> proposer;
        if (res.transport) {
          auto cfg = res.llm;
          cfg.max_length = 256;  // a whole plan, not a yes/no
          proposer = std::make_unique<baselines::LlmProposer>(cfg, res.transport,
                                                              baselines::LlmProposer::prompt_for(t, world));
        } else {
          const auto& list = res.proposals.at(t.name);
          proposer = std::make_unique<baselines::ScriptedProposer>(list, stable_hash(seed, "lm") % list.size());
        }
        o = baselines::lm_run(t, world, *proposer, res.lm_max_attempts);
        break;
      }
    }
    auto keys = resolution(o.trace, &situation,
                           world.situation_applied() ? world.situation_step() : std::nullopt, t);
    r.outcome = controller::outcome_name(o.kind);
    r.patches = o.patches.size();
    r.queries = o.queries;
    r.attempts = o.attempts;
    r.steps = o.trace.size();
    for (std::size_t i = 0; i < keys.size(); ++i) r.resolution += (i ? "+" : "") + keys[i];
    r.success = adjudicate(o, world.goal_satisfied(), keys, task, situation.category, res.labels);
    if (outcome) *outcome = std::move(o);
  } catch (const std::exception& e) {
    r.outcome = "error";
    r.success = false;
    r.error = e.what();
  }
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

std::vector<TrialResult> run_experiment(const ExperimentConfig& config, const Resources& res) {
  struct Row {
    std::string task;
    std::size_t trial;
  };
  std::vector<Row> rows;
  for (const auto& t : config.tasks)
    for (std::size_t i = 0; i < config.trials_per_task; ++i) rows.push_back({t, i});

  const std::size_t m = config.methods.size();
  std::vector<TrialResult> results(rows.size() * m);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < rows.size();) {
      const auto& row = rows[i];
      const std::uint64_t seed = trial_seed(config.master_seed, row.task, row.trial);
      const auto& situation = sample_situation(res.dataset, row.task, seed);
      for (std::size_t k = 0; k < m; ++k)
        results[i * m + k] = run_trial(res, row.task, row.trial, seed, situation, config.methods[k]);
    }
  };
  std::size_t n = config.workers ? config.workers : std::max(1u, std::thread::hardware_concurrency());
  n = std::min(n, rows.size());
  if (n <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < n; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return results;
}

std::vector<TrialResult> run_experiment(const ExperimentConfig& config) {
  return run_experiment(config, Resources::load(config));
}

// ---------------------------------------------------------------------------

GroupBy group_by_from_name(std::string_view name) {
  if (name == "task") return GroupBy::kTask;
  if (name == "object") return GroupBy::kObject;
  throw EvalError("unknown group key '" + std::string(name) + "' (expected task or object)");
}

std::vector<AggregateRow> aggregate(const std::vector<TrialResult>& results, GroupBy by) {
  std::vector<std::string> groups;
  std::vector<Method> methods;
  std::map<std::pair<std::string, Method>, AggregateRow> cells;
  for (const auto& r : results) {
    const std::string& g = by == GroupBy::kTask ? r.task : r.object;
    if (std::find(groups.begin(), groups.end(), g) == groups.end()) groups.push_back(g);
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
    auto& cell = cells[{g, r.method}];
    cell.group = g;
    cell.method = r.method;
    ++cell.n;
    cell.successes += r.success;
  }
  if (by == GroupBy::kObject) std::sort(groups.begin(), groups.end());
  std::vector<AggregateRow> rows;
  for (const auto& g : groups)
    for (Method m : methods)
      if (auto it = cells.find({g, m}); it != cells.end() && it->second.n > 0) rows.push_back(it->second);
  return rows;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

json rows_json(const std::vector<AggregateRow>& rows) {
  json out = json::array();
  for (const auto& r : rows)
    out.push_back({{"group", r.group},
                   {"method", method_name(r.method)},
                   {"successes", r.successes},
                   {"n", r.n},
                   {"rate", r.rate()}});
  return out;
}

}  // namespace

std::string results_csv(const std::vector<TrialResult>& results) {
  std::ostringstream out;
  out << "# cowp results schema " << kResultsSchemaVersion << "\n";
  out << "task,trial,seed,method,situation,category,object,outcome,success,resolution,patches,queries,attempts,"
         "steps,error\n";
  for (const auto& r : results) {
    out << csv_field(r.task) << ',' << r.trial << ',' << r.seed << ',' << method_name(r.method) << ','
        << csv_field(r.situation) << ',' << csv_field(r.category) << ',' << csv_field(r.object) << ','
        << r.outcome << ',' << (r.success ? 1 : 0) << ',' << csv_field(r.resolution) << ',' << r.patches << ','
        << r.queries << ',' << r.attempts << ',' << r.steps << ',' << csv_field(r.error) << '\n';
  }
  return out.str();
}

std::string summary_json(const std::vector<TrialResult>& results) {
  json doc;
  doc["schema_version"] = kResultsSchemaVersion;
  doc["trials"] = results.size();
  std::size_t errors = 0;
  for (const auto& r : results) errors += r.outcome == "error";
  doc["errors"] = errors;
  doc["by_task"] = rows_json(aggregate(results, GroupBy::kTask));
  doc["by_object"] = rows_json(aggregate(results, GroupBy::kObject));
  return doc.dump(2) + "\n";
}

std::string timings_log(const std::vector<TrialResult>& results) {
  std::ostringstream out;
  double total = 0;
  out << std::fixed << std::setprecision(6);
  for (const auto& r : results) {
    out << r.task << ' ' << r.trial << ' ' << method_name(r.method) << ' ' << r.wall_seconds << '\n';
    total += r.wall_seconds;
  }
  out << "total " << total << '\n';
  return out.str();
}

std::string format_table(const std::vector<AggregateRow>& rows) {
  std::vector<std::string> groups;
  std::vector<Method> methods;
  for (const auto& r : rows) {
    if (std::find(groups.begin(), groups.end(), r.group) == groups.end()) groups.push_back(r.group);
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
  }
  std::size_t width = 5;
  for (const auto& g : groups) width = std::max(width, g.size());
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(width)) << "group";
  for (Method m : methods) out << "  " << std::right << std::setw(12) << method_name(m);
  out << '\n';
  for (const auto& g : groups) {
    out << std::left << std::setw(static_cast<int>(width)) << g;
    for (Method m : methods) {
      auto it = std::find_if(rows.begin(), rows.end(), [&](const auto& r) { return r.group == g && r.method == m; });
      std::string cell = "-";
      if (it != rows.end()) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.3f (%zu)", it->rate(), it->n);
        cell = buf;
      }
      out << "  " << std::right << std::setw(12) << cell;
    }
    out << '\n';
  }
  return out.str();
}

void write_outputs(const std::vector<TrialResult>& results, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  write_text(out_dir / "results.csv", results_csv(results));
  write_text(out_dir / "summary.json", summary_json(results));
  write_text(out_dir / "timings.log", timings_log(results));
}

}  // namespace cowp::eval
