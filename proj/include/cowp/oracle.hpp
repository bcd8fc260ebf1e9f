#pragma once

// Commonsense oracle: the three prompt templates, answer parsing, and the
// backends that answer rendered prompts (a scripted knowledge base or a
// remote completion service, optionally through a record/replay cassette).

#include <condition_variable>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cowp/pddl.hpp"

namespace cowp::oracle {

class OracleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Backend answer that is neither yes/no nor one of the listed objects.
class UnparseableAnswer : public OracleError {
 public:
  using OracleError::OracleError;
};

class TransportError : public OracleError {
 public:
  using OracleError::OracleError;
};

enum class TemplateId { kT1, kT2, kT3 };

std::string_view template_name(TemplateId id);
TemplateId template_from_name(std::string_view name);

/// The raw pattern text with its named slots in brackets.
std::string_view pattern(TemplateId id);

using Slots = std::map<std::string, std::string>;

/// T1 slots: action, situation, optional connective.
/// T2 slots: action, preposition, object, optional connective.
/// T3 slots: objects (already joined, see join_objects), task.
/// A missing connective is "that" for clause-like actions ("a robot ...")
/// and "to" otherwise.
std::string render(TemplateId id, const Slots& slots);

/// "a", "a and b", "a, b, and c".
std::string join_objects(const std::vector<std::string>& objects);

std::string render_t3(const std::vector<std::string>& objects, std::string_view task);

/// Prompt decomposed back into its slots; nullopt if the text matches no
/// template.
struct ParsedPrompt {
  TemplateId id;
  Slots slots;
  std::vector<std::string> objects;  // T3 only
};
std::optional<ParsedPrompt> parse_prompt(std::string_view prompt);

struct OracleVerdict {
  std::optional<bool> feasible;
  std::optional<std::string> selected_object;
  std::string raw_text;

  bool operator==(const OracleVerdict&) const = default;
};

/// Shared answer parser. T1/T2: the leading word must be yes or no. T3: the
/// listed object that occurs earliest in the answer (longest name on ties).
OracleVerdict parse_answer(std::string_view prompt, std::string_view answer);

/// Trim, collapse internal whitespace, lowercase.
std::string normalize(std::string_view text);

// ---------------------------------------------------------------------------
// Natural-language phrasing of ground actions and objects.

struct ActionPhrase {
  std::string action;
  // Words with slots "{i}" (surface name of argument i) or "{i:a}" (same,
  // with an indefinite article).
  std::string surface;
  std::string connective = "to";
  std::string preposition = "with";
};

/// "chopping_board_0" -> "chopping board"; trailing numeric index dropped.
std::string surface_name(std::string_view object);
std::string with_article(std::string_view noun);

std::string describe(const ActionPhrase& phrase, const std::vector<std::string>& args);

class PhraseTable {
 public:
  PhraseTable() = default;
  explicit PhraseTable(std::vector<ActionPhrase> phrases);

  const ActionPhrase& at(std::string_view action) const;
  bool contains(std::string_view action) const;
  std::string describe(const pddl::GroundAction& action) const;
  const std::vector<ActionPhrase>& phrases() const { return phrases_; }

  /// Throws OracleError unless every schema has exactly one phrase.
  void check_covers(const pddl::Domain& domain) const;

 private:
  std::vector<ActionPhrase> phrases_;
};

// ---------------------------------------------------------------------------
// Backends.

class Backend {
 public:
  virtual ~Backend() = default;
  virtual OracleVerdict query(const std::string& prompt) const = 0;
};

inline OracleVerdict query(const Backend& backend, const std::string& prompt) {
  return backend.query(prompt);
}

enum class DefaultPolicy { kRefuse, kAssumeInfeasible };

/// Deterministic file-backed stand-in for the language model. Answers come
/// from, in order: exact entries, Template 1 situation rules, Template 2
/// usage rules, Template 3 rankings. Every answer is raw text run through
/// parse_answer, so the scripted path exercises the same parser as the LLM.
class ScriptedKB : public Backend {
 public:
  struct SituationRule {
    std::string situation;                 // matched as a phrase inside the situation slot
    std::vector<std::string> unsuitable;   // phrases that make an action unsuitable
  };
  struct UsageRule {
    std::string action;                    // T2 action slot
    std::vector<std::string> suitable;     // object surface names answered "Yes"
  };
  struct Ranking {
    std::string task;
    std::vector<std::string> order;        // most suitable first
  };

  static constexpr int kSchemaVersion = 1;

  ScriptedKB() = default;
  static ScriptedKB from_json_text(std::string_view text);
  static ScriptedKB load(const std::filesystem::path& path);

  OracleVerdict query(const std::string& prompt) const override;
  /// Raw answer text or nullopt on a miss.
  std::optional<std::string> answer(const std::string& prompt) const;

  void add_entry(std::string_view prompt, std::string answer);
  void add_rule(SituationRule rule) { situation_rules_.push_back(std::move(rule)); }
  void add_rule(UsageRule rule) { usage_rules_.push_back(std::move(rule)); }
  void add_ranking(Ranking ranking) { rankings_.push_back(std::move(ranking)); }
  void set_policy(DefaultPolicy policy) { policy_ = policy; }
  DefaultPolicy policy() const { return policy_; }
  std::size_t entry_count() const { return entries_.size(); }

 private:
  std::map<std::string, std::string> entries_;  // normalized prompt -> answer
  std::vector<SituationRule> situation_rules_;
  std::vector<UsageRule> usage_rules_;
  std::vector<Ranking> rankings_;
  DefaultPolicy policy_ = DefaultPolicy::kRefuse;
};

struct LlmConfig {
  std::string model = "text-davinci-002";
  double temperature = 0.0;
  double top_p = 1.0;
  int max_length = 32;
  double presence_penalty = 0.0;
  double frequency_penalty = 0.0;
  std::string endpoint = "https://api.openai.com/v1/completions";
  std::string api_key_env = "OPENAI_API_KEY";
  int max_retries = 3;
  int max_in_flight = 4;
  double timeout_seconds = 30.0;
  double retry_delay_seconds = 1.0;
};

/// JSON request body: exactly the decoding fields of `config` plus the prompt.
std::string request_body(const LlmConfig& config, std::string_view prompt);
/// Completion text out of a {"choices":[{"text":...}]} response.
std::string completion_text(std::string_view response_body);

/// Turns a prompt into raw completion text.
class CompletionTransport {
 public:
  virtual ~CompletionTransport() = default;
  virtual std::string complete(const std::string& prompt, const LlmConfig& config) = 0;
};

/// POSTs to config.endpoint; retries transport failures, 429 and 5xx.
class HttpTransport : public CompletionTransport {
 public:
  std::string complete(const std::string& prompt, const LlmConfig& config) override;
};

/// Append-only JSONL log of {"prompt", "response"} pairs. In replay mode a
/// missing prompt is an error; in record mode misses go to `inner` and are
/// appended to the file.
class Cassette : public CompletionTransport {
 public:
  enum class Mode { kReplay, kRecord };

  Cassette(std::filesystem::path path, Mode mode,
           std::shared_ptr<CompletionTransport> inner = nullptr);

  std::string complete(const std::string& prompt, const LlmConfig& config) override;
  std::size_t size() const;

 private:
  std::filesystem::path path_;
  Mode mode_;
  std::shared_ptr<CompletionTransport> inner_;
  mutable std::mutex mutex_;
  std::map<std::string, std::string> recorded_;
};

class LlmBackend : public Backend {
 public:
  LlmBackend(LlmConfig config, std::shared_ptr<CompletionTransport> transport);

  OracleVerdict query(const std::string& prompt) const override;
  const LlmConfig& config() const { return config_; }

 private:
  LlmConfig config_;
  std::shared_ptr<CompletionTransport> transport_;
  mutable std::mutex mutex_;
  mutable std::condition_variable slot_freed_;
  mutable int in_flight_ = 0;
};

}  // namespace cowp::oracle
