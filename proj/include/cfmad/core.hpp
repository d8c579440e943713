#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace cfmad {

/// All JSON emitted by the project uses ordered_json so that repeated runs
/// serialize byte-identically.
using Json = nlohmann::ordered_json;

/// Sentinel returned by parsers when no label can be extracted. Scored as an
/// incorrect prediction, never as a third class.
inline constexpr const char* kUnparsed = "UNPARSED";
/// Sentinel prediction recorded when a question's backend calls failed after
/// all retries.
inline constexpr const char* kBackendError = "BACKEND_ERROR";

inline constexpr const char* kTrueLabel = "True";
inline constexpr const char* kFalseLabel = "False";

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed record in a data file (dataset, fixture, transcript).
class SchemaError : public Error {
 public:
  SchemaError(std::string where, std::string field, const std::string& detail)
      : Error(where + ": field '" + field + "': " + detail),
        where_(std::move(where)),
        field_(std::move(field)) {}
  const std::string& where() const { return where_; }
  const std::string& field() const { return field_; }

 private:
  std::string where_;
  std::string field_;
};

enum class TaskKind { fact_check, boolean_qa, multi_choice, open_ended };

const char* to_string(TaskKind kind);
TaskKind task_kind_from_string(const std::string& name);

inline bool is_binary(TaskKind kind) {
  return kind == TaskKind::fact_check || kind == TaskKind::boolean_qa;
}

struct QuestionOption {
  std::string label;
  std::string text;
  bool operator==(const QuestionOption&) const = default;
};

/// One benchmark item. `context` holds the evidence paragraph (fact check),
/// passage (boolean QA) or narrative (reading comprehension) and may be
/// empty. Options are empty for open-ended items until candidates have been
/// enumerated.
struct Question {
  std::string id;
  TaskKind task_kind = TaskKind::multi_choice;
  std::string context;
  std::string query;
  std::vector<QuestionOption> options;
  std::string gold_label;
  std::optional<int> num_hops;

  std::vector<std::string> option_labels() const;
  const QuestionOption* find_option(const std::string& label) const;
  bool operator==(const Question&) const = default;
};

enum class CandidateOrigin { dataset_option, cot_majority, random_fill, sampled_open_ended };

const char* to_string(CandidateOrigin origin);
CandidateOrigin candidate_origin_from_string(const std::string& name);

/// A possible answer the pipeline takes a stance on.
struct CandidateAnswer {
  std::string label;
  std::string text;
  CandidateOrigin origin = CandidateOrigin::dataset_option;
  bool operator==(const CandidateAnswer&) const = default;
};

/// A justification generated under a preset stance, stored verbatim.
struct Abduction {
  CandidateAnswer stance;
  std::string rationale_text;
  std::string exchange_id;
  bool operator==(const Abduction&) const = default;
};

enum class DebateRole { abducting_agent, critic, judge };

const char* to_string(DebateRole role);
DebateRole debate_role_from_string(const std::string& name);

struct DebateTurn {
  DebateRole role = DebateRole::critic;
  int round_index = 1;  // 1-based, <= configured rounds
  std::string text;
  std::string exchange_id;
  bool operator==(const DebateTurn&) const = default;
};

/// The exchange of one agent-critic pair. Turns alternate critic then
/// abducting agent within each round; R configured rounds yield 2R turns.
struct DebateTranscript {
  CandidateAnswer stance;
  Abduction abduction;
  std::vector<DebateTurn> turns;
  bool operator==(const DebateTranscript&) const = default;
};

/// Final adjudicated answer. predicted_label is one of the presented stance
/// labels or UNPARSED; parse_rule names the extraction path that produced it
/// (e.g. "option_letter", "true_false_reask", "fallback_stance_1").
struct Judgment {
  std::string predicted_label;
  std::string raw_text;
  std::string parse_rule;
  bool operator==(const Judgment&) const = default;
};

struct SamplingConfig {
  double temperature = 0.2;  // backend-accepted range [0, 2]
  std::string prompt_variant;
  std::optional<std::uint64_t> seed;
  bool operator==(const SamplingConfig&) const = default;
};

/// Per-question result of one method run. `intermediates` carries
/// method-specific data (sampled labels, initial answers, final agent turns)
/// that the post-hoc analyzers consume.
struct RunRecord {
  std::string question_id;
  std::string method;
  std::string prediction;
  std::string gold;
  std::vector<std::string> exchange_ids;
  int prompts_used = 0;
  long long tokens_in = 0;
  long long tokens_out = 0;
  long long wall_ms = 0;
  Json intermediates = Json::object();
};

std::string trim(const std::string& s);
std::string lowercase(const std::string& s);

/// Canonical form used for gold comparison: trimmed, and case-folded to
/// "True"/"False" when the trimmed value is a true/false word. All other
/// labels compare exactly.
std::string normalize_label(const std::string& label);
bool labels_equal(const std::string& a, const std::string& b);

/// Total function; returns one description per violated invariant, empty when
/// the question is well formed.
std::vector<std::string> validate_question(const Question& q);

Json to_json(const Question& q);
Question question_from_json(const Json& j);
Json to_json(const CandidateAnswer& a);
CandidateAnswer candidate_from_json(const Json& j);
Json to_json(const Abduction& a);
Abduction abduction_from_json(const Json& j);
Json to_json(const DebateTurn& t);
DebateTurn debate_turn_from_json(const Json& j);
Json to_json(const DebateTranscript& t);
DebateTranscript debate_transcript_from_json(const Json& j);
Json to_json(const Judgment& j);
Judgment judgment_from_json(const Json& j);
Json to_json(const SamplingConfig& s);
SamplingConfig sampling_from_json(const Json& j);
Json to_json(const RunRecord& r);
RunRecord run_record_from_json(const Json& j);

}  // namespace cfmad
