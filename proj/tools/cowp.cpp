// cowp: plan, validate, run single trials, evaluate matrices, generate the
// situation dataset and check knowledge files.
//
// Exit codes: 0 success, 1 domain-level failure, 2 usage or input error.

#include <CLI11.hpp>

#include <iostream>

#include "cowp/evalharness.hpp"
#include "cowp/util.hpp"

using namespace cowp;

namespace {

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::filesystem::path data_dir_or_default(const std::string& flag) {
  return flag.empty() ? std::filesystem::path(COWP_DATA_DIR) : std::filesystem::path(flag);
}

std::pair<pddl::Domain, pddl::Problem> load_pair(const std::string& domain_file, const std::string& problem_file) {
  pddl::Domain d;
  try {
    d = pddl::parse_domain(read_text(domain_file));
  } catch (const pddl::ParseError& e) {
    throw UsageError(domain_file + ":" + e.what());
  }
  try {
    auto p = pddl::parse_problem(read_text(problem_file), d);
    return {std::move(d), std::move(p)};
  } catch (const pddl::ParseError& e) {
    throw UsageError(problem_file + ":" + e.what());
  }
}

int cmd_plan(const std::string& domain_file, const std::string& problem_file, const std::string& oracle) {
  if (oracle != "none") throw UsageError("--oracle supports only 'none'");
  auto [d, p] = load_pair(domain_file, problem_file);
  auto plan = planner::plan(d, p);
  if (!plan) {
    std::cout << "no solution\n";
    return kFailure;
  }
  std::cout << planner::format_plan(*plan, true);
  return kOk;
}

int cmd_validate(const std::string& domain_file, const std::string& problem_file, const std::string& plan_file) {
  auto [d, p] = load_pair(domain_file, problem_file);
  auto plan = planner::parse_plan(read_text(plan_file), d, p);
  auto report = planner::check_plan(plan, d, p);
  if (report.valid) {
    std::cout << "valid (" << plan.cost() << " steps)\n";
    return kOk;
  }
  std::cout << "invalid";
  if (report.failed_step) std::cout << " at S" << *report.failed_step + 1;
  std::cout << ": " << report.reason << "\n";
  return kFailure;
}

struct RunFlags {
  std::string task;
  std::uint64_t seed = 0;
  std::string situation;
  std::string method = "cowp";
  std::string kb;
  std::string cassette;
  bool record = false;
  bool json = false;
};

int cmd_run(const std::filesystem::path& data_dir, const RunFlags& f) {
  const auto& names = sim::task_names();
  if (std::find(names.begin(), names.end(), f.task) == names.end())
    throw UsageError("unknown task '" + f.task + "'");
  eval::ExperimentConfig config = eval::ExperimentConfig::from_json_text(R"({"schema_version": 1})", data_dir);
  config.data_dir = data_dir;
  config.dataset = data_dir / "situations.json";
  config.labels = data_dir / "labels.json";
  config.kb = f.kb.empty() ? data_dir / "kb.json" : std::filesystem::path(f.kb);
  config.ek_store = data_dir / "ek_store.json";
  config.tasks = {f.task};
  const eval::Method method = eval::method_from_name(f.method);
  if (!f.cassette.empty()) {
    config.backend = "llm";
    config.cassette = f.cassette;
    config.record = f.record;
  }
  auto res = eval::Resources::load(config);

  sim::SituationRecord situation;
  situation.task = f.task;
  if (!f.situation.empty()) {
    const auto seeds = sim::SituationDataset::load(data_dir / "seed_situations.json");
    const sim::SituationRecord* found = res.dataset.find(f.situation);
    if (!found) found = seeds.find(f.situation);
    if (!found) throw UsageError("unknown situation '" + f.situation + "'");
    if (found->task != f.task) throw UsageError(f.situation + " belongs to " + found->task);
    situation = *found;
  } else {
    situation.id = "none";
    situation.category = "none";
  }

  controller::Outcome out;
  auto r = eval::run_trial(res, f.task, 0, f.seed, situation, method, &out);
  if (f.json) {
    std::cout << out.to_json();
  } else {
    if (!situation.description.empty())
      std::cout << "situation after S" << situation.step_index << ": " << situation.description << "\n";
    for (const auto& e : out.transcript) {
      if (e.kind == "plan") {
        std::cout << "plan:\n" << e.text;
      } else if (e.kind == "patch" || e.kind == "situation") {
        std::cout << e.kind << ": " << e.text << "\n";
      } else {
        std::cout << e.kind << ": " << e.text << "\n  -> " << e.answer << "\n";
      }
    }
    std::cout << "trace:\n";
    for (std::size_t i = 0; i < out.trace.size(); ++i) std::cout << "  S" << i + 1 << ": " << out.trace[i].str() << "\n";
    for (const auto& p : out.patches) std::cout << "patch " << p.str() << "\n";
    if (method == eval::Method::kLm) std::cout << "attempts: " << r.attempts << "\n";
  }
  std::cout << "outcome: " << r.outcome;
  if (!out.detail.empty()) std::cout << " (" << out.detail << ")";
  std::cout << "\nresolution: " << r.resolution << "\nsuccess: " << (r.success ? "yes" : "no") << "\n";
  if (!r.error.empty()) std::cerr << "error: " << r.error << "\n";
  return r.success ? kOk : kFailure;
}

int cmd_eval(const std::string& config_file, const std::string& out_dir, std::size_t workers, bool by_object) {
  auto config = eval::ExperimentConfig::load(config_file);
  if (workers) config.workers = workers;
  auto res = eval::Resources::load(config);
  auto results = eval::run_experiment(config, res);
  eval::write_outputs(results, out_dir);
  std::cout << eval::format_table(eval::aggregate(results, eval::GroupBy::kTask));
  if (by_object) std::cout << "\n" << eval::format_table(eval::aggregate(results, eval::GroupBy::kObject));
  std::size_t errors = 0;
  for (const auto& r : results) errors += r.outcome == "error";
  if (errors) std::cerr << errors << " trial(s) recorded an error; see results.csv\n";
  return kOk;
}

int cmd_dataset_gen(const std::string& spec_file, std::optional<std::uint64_t> seed, const std::string& out,
                    const std::string& stats_out) {
  auto spec = sim::DatasetSpec::load(spec_file);
  auto dataset = sim::generate_dataset(spec, seed.value_or(spec.seed));
  const auto stats = dataset.stats();
  if (out.empty()) {
    std::cout << dataset.to_json();
  } else {
    write_text(out, dataset.to_json());
    std::cout << stats.to_json();
  }
  if (!stats_out.empty()) write_text(stats_out, stats.to_json());
  try {
    dataset.check(spec.min_per_task, spec.category_bounds);
  } catch (const sim::SimError& e) {
    std::cerr << e.what() << "\n";
    return kFailure;
  }
  return kOk;
}

// Every prompt the controller could send on the bundled dataset must have
// an answer in the knowledge file.
int cmd_kb_check(const std::filesystem::path& data_dir, const std::string& kb_file, bool verbose) {
  const auto kb = oracle::ScriptedKB::load(kb_file.empty() ? data_dir / "kb.json" : std::filesystem::path(kb_file));
  const auto dataset = sim::SituationDataset::load(data_dir / "situations.json");
  std::set<std::string> prompts;
  for (const auto& name : sim::task_names()) {
    const auto t = sim::load_task(data_dir, name);
    for (const auto* rec : dataset.for_task(name))
      for (const auto& step : t.reference_plan.steps)
        prompts.insert(oracle::render(oracle::TemplateId::kT1,
                                      {{"action", t.phrases.describe(step)},
                                       {"situation", rec->description},
                                       {"connective", t.phrases.at(step.name).connective}}));
    for (const auto& e : t.effect_table) {
      std::vector<std::string> names;
      for (const auto& kind : e.kinds) {
        names.push_back(oracle::surface_name(sim::spawned_object_name(kind)));
        prompts.insert(oracle::render(oracle::TemplateId::kT2, {{"action", e.query_action},
                                                                {"preposition", e.query_preposition},
                                                                {"object", oracle::with_article(names.back())},
                                                                {"connective", e.query_connective}}));
      }
      prompts.insert(oracle::render_t3(names, e.task));
    }
  }
  std::size_t misses = 0;
  for (const auto& p : prompts) {
    if (kb.answer(p)) continue;
    ++misses;
    if (verbose) std::cout << "miss: " << p << "\n";
  }
  std::cout << prompts.size() << " prompts, " << misses << " unanswered\n";
  return misses ? kFailure : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Open-world task planning with scripted or language-model commonsense"};
  app.require_subcommand(1);
  std::string data_flag;
  app.add_option("--data", data_flag, "Data directory (tasks, knowledge, datasets)");

  std::string domain_file, problem_file, plan_file, oracle = "none";
  auto* plan = app.add_subcommand("plan", "Print a plan for a PDDL domain and problem");
  plan->add_option("--domain", domain_file)->required();
  plan->add_option("--problem", problem_file)->required();
  plan->add_option("--oracle", oracle, "Only 'none' is supported");

  auto* validate = app.add_subcommand("validate", "Check a plan file against a domain and problem");
  validate->add_option("--domain", domain_file)->required();
  validate->add_option("--problem", problem_file)->required();
  validate->add_option("--plan", plan_file)->required();

  RunFlags rf;
  auto* run = app.add_subcommand("run", "Run one trial and print its transcript");
  run->add_option("--task", rf.task)->required();
  run->add_option("--seed", rf.seed);
  run->add_option("--situation", rf.situation, "Situation id from the dataset or the seed file");
  run->add_option("--method", rf.method)->check(CLI::IsMember({"cowp", "cw", "ek", "lm"}));
  run->add_option("--kb", rf.kb, "Scripted knowledge file");
  run->add_option("--cassette", rf.cassette, "Use the language-model backend through this cassette");
  run->add_flag("--record", rf.record, "Record cassette misses against the live endpoint");
  run->add_flag("--json", rf.json, "Print the full outcome as JSON");

  std::string config_file, out_dir;
  std::size_t workers = 0;
  bool by_object = false;
  auto* ev = app.add_subcommand("eval", "Run an experiment matrix");
  ev->add_option("--config", config_file)->required();
  ev->add_option("--out", out_dir)->required();
  ev->add_option("--workers", workers);
  ev->add_flag("--by-object", by_object, "Also print rates per situation object");

  std::string spec_file, gen_out, stats_out;
  std::optional<std::uint64_t> gen_seed;
  auto* gen = app.add_subcommand("dataset-gen", "Generate the situation dataset");
  gen->add_option("--spec", spec_file);
  gen->add_option("--seed", gen_seed);
  gen->add_option("--out", gen_out, "Dataset file; standard output when absent");
  gen->add_option("--stats", stats_out);

  std::string kb_file;
  bool verbose = false;
  auto* kbc = app.add_subcommand("kb-check", "Report dataset prompts the knowledge file cannot answer");
  kbc->add_option("--kb", kb_file);
  kbc->add_flag("--verbose", verbose);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? kOk : kUsage;
  }

  const auto data_dir = data_dir_or_default(data_flag);
  try {
    if (*plan) return cmd_plan(domain_file, problem_file, oracle);
    if (*validate) return cmd_validate(domain_file, problem_file, plan_file);
    if (*run) return cmd_run(data_dir, rf);
    if (*ev) return cmd_eval(config_file, out_dir, workers, by_object);
    if (*gen)
      return cmd_dataset_gen(spec_file.empty() ? (data_dir / "dataset_spec.json").string() : spec_file, gen_seed,
                             gen_out, stats_out);
    if (*kbc) return cmd_kb_check(data_dir, kb_file, verbose);
  } catch (const planner::BudgetExceeded& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
