#include "cowp/oracle.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace cowp::oracle {

namespace {

using json = nlohmann::json;

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

/// Position of `needle` in `hay` where it is not glued to other word
/// characters, or npos. Both arguments are expected in the same case.
std::size_t find_phrase(std::string_view hay, std::string_view needle, std::size_t from = 0) {
  if (needle.empty()) return std::string_view::npos;
  for (auto pos = hay.find(needle, from); pos != std::string_view::npos;
       pos = hay.find(needle, pos + 1)) {
    bool left = pos == 0 || !is_word_char(hay[pos - 1]) || !is_word_char(needle.front());
    std::size_t end = pos + needle.size();
    bool right = end == hay.size() || !is_word_char(hay[end]) || !is_word_char(needle.back());
    if (left && right) return pos;
  }
  return std::string_view::npos;
}

bool contains_phrase(std::string_view hay, std::string_view needle) {
  return find_phrase(hay, needle) != std::string_view::npos;
}

const Slots::mapped_type& slot(const Slots& slots, const std::string& name) {
  auto it = slots.find(name);
  if (it == slots.end()) throw OracleError("missing slot '" + name + "'");
  return it->second;
}

std::string connective_for(const Slots& slots) {
  if (auto it = slots.find("connective"); it != slots.end()) {
    if (it->second != "to" && it->second != "that")
      throw OracleError("connective must be 'to' or 'that', got '" + it->second + "'");
    return it->second;
  }
  const std::string& action = slot(slots, "action");
  auto first = action.substr(0, action.find(' '));
  return first == "a" || first == "an" || first == "the" ? "that" : "to";
}

constexpr std::string_view kPrepositions[] = {"on", "in", "with", "at", "over"};

bool starts_with_ci(std::string_view text, std::string_view prefix) {
  if (text.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i)
    if (std::tolower(static_cast<unsigned char>(text[i])) != prefix[i]) return false;
  return true;
}

std::string collapse(std::string_view text) {
  std::string out;
  bool space = false;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      space = !out.empty();
      continue;
    }
    if (space) out += ' ';
    space = false;
    out += c;
  }
  return out;
}

std::vector<std::string> split_objects(std::string_view list) {
  std::vector<std::string> out;
  std::string text(list);
  if (text.find(", ") == std::string::npos) {
    auto pos = text.find(" and ");
    if (pos == std::string::npos) return {text};
    return {text.substr(0, pos), text.substr(pos + 5)};
  }
  std::size_t start = 0;
  while (true) {
    auto pos = text.find(", ", start);
    std::string item = text.substr(start, pos == std::string::npos ? std::string::npos : pos - start);
    if (pos == std::string::npos) {
      if (item.rfind("and ", 0) == 0) item = item.substr(4);
      out.push_back(item);
      break;
    }
    out.push_back(item);
    start = pos + 2;
  }
  return out;
}

std::string strip_article(std::string_view noun) {
  for (std::string_view article : {"a ", "an ", "the "})
    if (noun.substr(0, article.size()) == article) return std::string(noun.substr(article.size()));
  return std::string(noun);
}

}  // namespace

std::string_view template_name(TemplateId id) {
  switch (id) {
    case TemplateId::kT1: return "T1";
    case TemplateId::kT2: return "T2";
    case TemplateId::kT3: return "T3";
  }
  return "?";
}

TemplateId template_from_name(std::string_view name) {
  if (name == "T1") return TemplateId::kT1;
  if (name == "T2") return TemplateId::kT2;
  if (name == "T3") return TemplateId::kT3;
  throw OracleError("unknown template '" + std::string(name) + "'");
}

std::string_view pattern(TemplateId id) {
  switch (id) {
    case TemplateId::kT1: return "Is it suitable [to/that] [PERFORM ACTION], if [SITUATION]?";
    case TemplateId::kT2: return "Is it suitable [to/that] [PERFORM ACTION] [on/in/with/at/over] [OBJECT]?";
    case TemplateId::kT3:
      return "There are some objects, such as [OBJ-1, OBJ-2, ..., and OBJ-N]. "
             "Which is the most suitable for [CURRENT TASK]?";
  }
  return "";
}

std::string render(TemplateId id, const Slots& slots) {
  switch (id) {
    case TemplateId::kT1:
      return "Is it suitable " + connective_for(slots) + " " + slot(slots, "action") + ", if " +
             slot(slots, "situation") + "?";
    case TemplateId::kT2: {
      const auto& prep = slot(slots, "preposition");
      if (std::find(std::begin(kPrepositions), std::end(kPrepositions), prep) == std::end(kPrepositions))
        throw OracleError("unsupported preposition '" + prep + "'");
      return "Is it suitable " + connective_for(slots) + " " + slot(slots, "action") + " " + prep +
             " " + slot(slots, "object") + "?";
    }
    case TemplateId::kT3:
      return "There are some objects, such as " + slot(slots, "objects") +
             ". Which is the most suitable for " + slot(slots, "task") + "?";
  }
  throw OracleError("unknown template");
}

std::string join_objects(const std::vector<std::string>& objects) {
  if (objects.empty()) throw OracleError("object list is empty");
  if (objects.size() == 1) return objects[0];
  if (objects.size() == 2) return objects[0] + " and " + objects[1];
  std::string out;
  for (std::size_t i = 0; i + 1 < objects.size(); ++i) out += objects[i] + ", ";
  return out + "and " + objects.back();
}

std::string render_t3(const std::vector<std::string>& objects, std::string_view task) {
  return render(TemplateId::kT3, {{"objects", join_objects(objects)}, {"task", std::string(task)}});
}

std::optional<ParsedPrompt> parse_prompt(std::string_view prompt) {
  const std::string text = collapse(prompt);
  const std::string lower = pddl::lowercase(text);
  if (text.empty() || text.back() != '?') return std::nullopt;
  const std::string_view body = std::string_view(text).substr(0, text.size() - 1);
  const std::string_view lbody = std::string_view(lower).substr(0, lower.size() - 1);

  constexpr std::string_view kT3Head = "there are some objects, such as ";
  constexpr std::string_view kT3Mid = ". which is the most suitable for ";
  if (starts_with_ci(body, kT3Head)) {
    auto mid = lbody.find(kT3Mid);
    if (mid == std::string_view::npos) return std::nullopt;
    ParsedPrompt out{TemplateId::kT3, {}, {}};
    std::string list(body.substr(kT3Head.size(), mid - kT3Head.size()));
    out.slots["objects"] = list;
    out.slots["task"] = std::string(body.substr(mid + kT3Mid.size()));
    out.objects = split_objects(list);
    return out;
  }

  constexpr std::string_view kHead = "is it suitable ";
  if (!starts_with_ci(body, kHead)) return std::nullopt;
  std::string_view rest = body.substr(kHead.size());
  std::string_view lrest = lbody.substr(kHead.size());
  std::string connective;
  for (std::string_view c : {"to ", "that "}) {
    if (lrest.substr(0, c.size()) == c) {
      connective = std::string(c.substr(0, c.size() - 1));
      rest.remove_prefix(c.size());
      lrest.remove_prefix(c.size());
      break;
    }
  }
  if (connective.empty()) return std::nullopt;

  if (auto comma = lrest.find(", if "); comma != std::string_view::npos) {
    ParsedPrompt out{TemplateId::kT1, {}, {}};
    out.slots["connective"] = connective;
    out.slots["action"] = std::string(rest.substr(0, comma));
    out.slots["situation"] = std::string(rest.substr(comma + 5));
    return out;
  }

  std::size_t best = std::string_view::npos;
  std::string_view best_prep;
  for (std::string_view prep : kPrepositions) {
    std::string needle = " " + std::string(prep) + " ";
    auto pos = lrest.rfind(needle);
    if (pos != std::string_view::npos && (best == std::string_view::npos || pos > best)) {
      best = pos;
      best_prep = prep;
    }
  }
  if (best == std::string_view::npos) return std::nullopt;
  ParsedPrompt out{TemplateId::kT2, {}, {}};
  out.slots["connective"] = connective;
  out.slots["action"] = std::string(rest.substr(0, best));
  out.slots["preposition"] = std::string(best_prep);
  out.slots["object"] = std::string(rest.substr(best + best_prep.size() + 2));
  return out;
}

OracleVerdict parse_answer(std::string_view prompt, std::string_view answer) {
  auto parsed = parse_prompt(prompt);
  if (!parsed) throw OracleError("prompt matches no template: " + std::string(prompt));
  OracleVerdict verdict;
  verdict.raw_text = std::string(answer);
  const std::string lower = pddl::lowercase(answer);

  if (parsed->id == TemplateId::kT3) {
    std::size_t best_pos = std::string::npos;
    for (const auto& object : parsed->objects) {
      auto pos = find_phrase(lower, pddl::lowercase(object));
      if (pos == std::string::npos) continue;
      if (best_pos == std::string::npos || pos < best_pos ||
          (pos == best_pos && object.size() > verdict.selected_object->size())) {
        best_pos = pos;
        verdict.selected_object = object;
      }
    }
    if (!verdict.selected_object)
      throw UnparseableAnswer("answer names no listed object: '" + std::string(answer) + "'");
    return verdict;
  }

  std::size_t i = 0;
  while (i < lower.size() && !is_word_char(lower[i])) ++i;
  std::size_t j = i;
  while (j < lower.size() && std::isalpha(static_cast<unsigned char>(lower[j]))) ++j;
  std::string word = lower.substr(i, j - i);
  if (word == "yes") verdict.feasible = true;
  else if (word == "no") verdict.feasible = false;
  else throw UnparseableAnswer("answer is neither yes nor no: '" + std::string(answer) + "'");
  return verdict;
}

std::string normalize(std::string_view text) { return pddl::lowercase(collapse(text)); }

// ---------------------------------------------------------------------------

std::string surface_name(std::string_view object) {
  std::string name(object);
  auto us = name.rfind('_');
  if (us != std::string::npos && us + 1 < name.size() &&
      std::all_of(name.begin() + static_cast<std::ptrdiff_t>(us) + 1, name.end(),
                  [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
    name.erase(us);
  std::replace(name.begin(), name.end(), '_', ' ');
  return name;
}

std::string with_article(std::string_view noun) {
  if (noun.empty()) return std::string(noun);
  char c = static_cast<char>(std::tolower(static_cast<unsigned char>(noun.front())));
  bool vowel = std::string_view("aeiou").find(c) != std::string_view::npos;
  return (vowel ? "an " : "a ") + std::string(noun);
}

std::string describe(const ActionPhrase& phrase, const std::vector<std::string>& args) {
  const std::string& s = phrase.surface;
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '{') {
      out += s[i];
      continue;
    }
    auto close = s.find('}', i);
    if (close == std::string::npos) throw OracleError("unterminated slot in '" + s + "'");
    std::string spec = s.substr(i + 1, close - i - 1);
    bool article = false;
    if (auto colon = spec.find(':'); colon != std::string::npos) {
      if (spec.substr(colon + 1) != "a") throw OracleError("bad slot modifier in '" + s + "'");
      article = true;
      spec.erase(colon);
    }
    std::size_t index = 0;
    try {
      index = std::stoul(spec);
    } catch (const std::exception&) {
      throw OracleError("bad slot '{" + spec + "}' in '" + s + "'");
    }
    if (index >= args.size())
      throw OracleError("slot {" + spec + "} out of range for " + phrase.action);
    std::string noun = surface_name(args[index]);
    out += article ? with_article(noun) : noun;
    i = close;
  }
  return out;
}

PhraseTable::PhraseTable(std::vector<ActionPhrase> phrases) : phrases_(std::move(phrases)) {
  std::set<std::string> seen;
  for (const auto& p : phrases_) {
    if (!seen.insert(p.action).second) throw OracleError("duplicate phrase for action " + p.action);
    if (p.connective != "to" && p.connective != "that")
      throw OracleError("bad connective for " + p.action);
    if (std::find(std::begin(kPrepositions), std::end(kPrepositions), p.preposition) ==
        std::end(kPrepositions))
      throw OracleError("bad preposition for " + p.action);
  }
}

const ActionPhrase& PhraseTable::at(std::string_view action) const {
  for (const auto& p : phrases_)
    if (p.action == action) return p;
  throw OracleError("no phrase for action " + std::string(action));
}

bool PhraseTable::contains(std::string_view action) const {
  return std::any_of(phrases_.begin(), phrases_.end(),
                     [&](const ActionPhrase& p) { return p.action == action; });
}

std::string PhraseTable::describe(const pddl::GroundAction& action) const {
  return oracle::describe(at(action.name), action.args);
}

void PhraseTable::check_covers(const pddl::Domain& domain) const {
  for (const auto& a : domain.actions)
    if (!contains(a.name)) throw OracleError("no phrase for action " + a.name);
  for (const auto& p : phrases_)
    if (!domain.action(p.action)) throw OracleError("phrase for undeclared action " + p.action);
}

// ---------------------------------------------------------------------------

ScriptedKB ScriptedKB::from_json_text(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw OracleError(std::string("knowledge base is not valid JSON: ") + e.what());
  }
  try {
    int version = doc.at("schema_version").get<int>();
    if (version != kSchemaVersion)
      throw OracleError("unsupported knowledge base schema_version " + std::to_string(version));
    ScriptedKB kb;
    std::string policy = doc.value("default_policy", "refuse");
    if (policy == "refuse") kb.policy_ = DefaultPolicy::kRefuse;
    else if (policy == "assume_infeasible") kb.policy_ = DefaultPolicy::kAssumeInfeasible;
    else throw OracleError("unknown default_policy '" + policy + "'");
    for (const auto& e : doc.value("entries", json::array()))
      kb.add_entry(e.at("prompt").get<std::string>(), e.at("answer").get<std::string>());
    for (const auto& r : doc.value("situations", json::array())) {
      SituationRule rule{normalize(r.at("situation").get<std::string>()), {}};
      for (const auto& u : r.at("unsuitable")) rule.unsuitable.push_back(normalize(u.get<std::string>()));
      kb.add_rule(std::move(rule));
    }
    for (const auto& r : doc.value("usage", json::array())) {
      UsageRule rule{normalize(r.at("action").get<std::string>()), {}};
      for (const auto& s : r.at("suitable")) rule.suitable.push_back(normalize(s.get<std::string>()));
      kb.add_rule(std::move(rule));
    }
    for (const auto& r : doc.value("rankings", json::array())) {
      Ranking ranking{normalize(r.at("task").get<std::string>()), {}};
      for (const auto& o : r.at("order")) ranking.order.push_back(normalize(o.get<std::string>()));
      kb.add_ranking(std::move(ranking));
    }
    return kb;
  } catch (const json::exception& e) {
    throw OracleError(std::string("malformed knowledge base: ") + e.what());
  }
}

ScriptedKB ScriptedKB::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw OracleError("cannot open knowledge base " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

void ScriptedKB::add_entry(std::string_view prompt, std::string answer) {
  entries_[normalize(prompt)] = std::move(answer);
}

std::optional<std::string> ScriptedKB::answer(const std::string& prompt) const {
  const std::string key = normalize(prompt);
  if (auto it = entries_.find(key); it != entries_.end()) return it->second;
  auto parsed = parse_prompt(key);
  if (!parsed) return std::nullopt;

  switch (parsed->id) {
    case TemplateId::kT1: {
      const auto& action = parsed->slots["action"];
      const auto& situation = parsed->slots["situation"];
      bool matched = false;
      for (const auto& rule : situation_rules_) {
        if (!contains_phrase(situation, rule.situation)) continue;
        matched = true;
        for (const auto& bad : rule.unsuitable)
          if (contains_phrase(action, bad)) return "No.";
      }
      if (matched) return "Yes.";
      return std::nullopt;
    }
    case TemplateId::kT2: {
      const auto& action = parsed->slots["action"];
      std::string object = strip_article(parsed->slots["object"]);
      for (const auto& rule : usage_rules_) {
        if (rule.action != action) continue;
        bool ok = std::find(rule.suitable.begin(), rule.suitable.end(), object) != rule.suitable.end();
        return ok ? "Yes." : "No.";
      }
      return std::nullopt;
    }
    case TemplateId::kT3: {
      const auto& task = parsed->slots["task"];
      for (const auto& ranking : rankings_) {
        if (ranking.task != task) continue;
        for (const auto& preferred : ranking.order)
          if (std::find(parsed->objects.begin(), parsed->objects.end(), preferred) != parsed->objects.end())
            return preferred;
      }
      return std::nullopt;
    }
  }
  return std::nullopt;
}

OracleVerdict ScriptedKB::query(const std::string& prompt) const {
  if (auto text = answer(prompt)) return parse_answer(prompt, *text);
  if (policy_ == DefaultPolicy::kAssumeInfeasible) {
    auto parsed = parse_prompt(prompt);
    if (!parsed || parsed->id != TemplateId::kT3) return OracleVerdict{false, std::nullopt, ""};
  }
  throw OracleError("no scripted answer for: " + prompt);
}

// ---------------------------------------------------------------------------

std::string request_body(const LlmConfig& config, std::string_view prompt) {
  nlohmann::ordered_json body;
  body["model"] = config.model;
  body["prompt"] = std::string(prompt);
  body["temperature"] = config.temperature;
  body["top_p"] = config.top_p;
  body["max_tokens"] = config.max_length;
  body["presence_penalty"] = config.presence_penalty;
  body["frequency_penalty"] = config.frequency_penalty;
  return body.dump();
}

std::string completion_text(std::string_view response_body) {
  try {
    auto doc = json::parse(response_body);
    return doc.at("choices").at(0).at("text").get<std::string>();
  } catch (const json::exception& e) {
    throw TransportError(std::string("unexpected completion response: ") + e.what());
  }
}

Cassette::Cassette(std::filesystem::path path, Mode mode, std::shared_ptr<CompletionTransport> inner)
    : path_(std::move(path)), mode_(mode), inner_(std::move(inner)) {
  if (mode_ == Mode::kRecord && !inner_) throw OracleError("recording cassette needs a transport");
  std::ifstream in(path_);
  if (!in) {
    if (mode_ == Mode::kReplay) throw OracleError("cannot open cassette " + path_.string());
    return;
  }
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto rec = json::parse(line);
      recorded_.emplace(rec.at("prompt").get<std::string>(), rec.at("response").get<std::string>());
    } catch (const json::exception& e) {
      throw OracleError(path_.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

std::string Cassette::complete(const std::string& prompt, const LlmConfig& config) {
  {
    std::lock_guard lock(mutex_);
    if (auto it = recorded_.find(prompt); it != recorded_.end()) return it->second;
    if (mode_ == Mode::kReplay) throw TransportError("cassette has no response for: " + prompt);
  }
  std::string response = inner_->complete(prompt, config);
  std::lock_guard lock(mutex_);
  if (recorded_.emplace(prompt, response).second) {
    std::ofstream out(path_, std::ios::app);
    out << json{{"prompt", prompt}, {"response", response}}.dump() << '\n';
  }
  return response;
}

std::size_t Cassette::size() const {
  std::lock_guard lock(mutex_);
  return recorded_.size();
}

LlmBackend::LlmBackend(LlmConfig config, std::shared_ptr<CompletionTransport> transport)
    : config_(std::move(config)), transport_(std::move(transport)) {
  if (!transport_) throw OracleError("LLM backend needs a transport");
  if (config_.max_in_flight < 1) throw OracleError("max_in_flight must be at least 1");
}

OracleVerdict LlmBackend::query(const std::string& prompt) const {
  {
    std::unique_lock lock(mutex_);
    slot_freed_.wait(lock, [&] { return in_flight_ < config_.max_in_flight; });
    ++in_flight_;
  }
  struct Release {
    const LlmBackend* self;
    ~Release() {
      std::lock_guard lock(self->mutex_);
      --self->in_flight_;
      self->slot_freed_.notify_one();
    }
  } release{this};
  std::string text = transport_->complete(prompt, config_);
  return parse_answer(prompt, text);
}

}  // namespace cowp::oracle
