#include "cfmad/core.hpp"

#include <algorithm>
#include <cctype>
#include <set>

namespace cfmad {

const char* to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::fact_check: return "fact_check";
    case TaskKind::boolean_qa: return "boolean_qa";
    case TaskKind::multi_choice: return "multi_choice";
    case TaskKind::open_ended: return "open_ended";
  }
  return "multi_choice";
}

TaskKind task_kind_from_string(const std::string& name) {
  if (name == "fact_check") return TaskKind::fact_check;
  if (name == "boolean_qa") return TaskKind::boolean_qa;
  if (name == "multi_choice") return TaskKind::multi_choice;
  if (name == "open_ended") return TaskKind::open_ended;
  throw SchemaError("task_kind", "task_kind", "unknown value '" + name + "'");
}

const char* to_string(CandidateOrigin origin) {
  switch (origin) {
    case CandidateOrigin::dataset_option: return "dataset_option";
    case CandidateOrigin::cot_majority: return "cot_majority";
    case CandidateOrigin::random_fill: return "random_fill";
    case CandidateOrigin::sampled_open_ended: return "sampled_open_ended";
  }
  return "dataset_option";
}

CandidateOrigin candidate_origin_from_string(const std::string& name) {
  if (name == "dataset_option") return CandidateOrigin::dataset_option;
  if (name == "cot_majority") return CandidateOrigin::cot_majority;
  if (name == "random_fill") return CandidateOrigin::random_fill;
  if (name == "sampled_open_ended") return CandidateOrigin::sampled_open_ended;
  throw SchemaError("candidate", "origin", "unknown value '" + name + "'");
}

const char* to_string(DebateRole role) {
  switch (role) {
    case DebateRole::abducting_agent: return "abducting_agent";
    case DebateRole::critic: return "critic";
    case DebateRole::judge: return "judge";
  }
  return "critic";
}

DebateRole debate_role_from_string(const std::string& name) {
  if (name == "abducting_agent") return DebateRole::abducting_agent;
  if (name == "critic") return DebateRole::critic;
  if (name == "judge") return DebateRole::judge;
  throw SchemaError("debate_turn", "role", "unknown value '" + name + "'");
}

std::vector<std::string> Question::option_labels() const {
  std::vector<std::string> labels;
  labels.reserve(options.size());
  for (const auto& o : options) labels.push_back(o.label);
  return labels;
}

const QuestionOption* Question::find_option(const std::string& label) const {
  for (const auto& o : options) {
    if (o.label == label) return &o;
  }
  return nullptr;
}

std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string lowercase(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string normalize_label(const std::string& label) {
  const std::string t = trim(label);
  const std::string low = lowercase(t);
  if (low == "true") return kTrueLabel;
  if (low == "false") return kFalseLabel;
  return t;
}

bool labels_equal(const std::string& a, const std::string& b) {
  return normalize_label(a) == normalize_label(b);
}

std::vector<std::string> validate_question(const Question& q) {
  std::vector<std::string> violations;
  std::set<std::string> seen;
  for (const auto& o : q.options) {
    if (o.label.empty()) {
      violations.push_back("options: empty option label");
    }
    if (!seen.insert(o.label).second) {
      violations.push_back("options: duplicate option label " + o.label);
    }
  }
  if (q.task_kind != TaskKind::open_ended) {
    if (q.find_option(q.gold_label) == nullptr) {
      violations.push_back("gold_label: '" + q.gold_label + "' is not among option labels");
    }
  }
  if (is_binary(q.task_kind)) {
    const std::set<std::string> want = {kTrueLabel, kFalseLabel};
    std::set<std::string> have;
    for (const auto& o : q.options) have.insert(o.label);
    if (have != want) {
      violations.push_back("options: task_kind requires {True,False} options");
    }
  }
  return violations;
}

Json to_json(const Question& q) {
  Json j;
  j["id"] = q.id;
  j["task_kind"] = to_string(q.task_kind);
  j["context"] = q.context;
  j["query"] = q.query;
  Json opts = Json::array();
  for (const auto& o : q.options) {
    opts.push_back(Json{{"label", o.label}, {"text", o.text}});
  }
  j["options"] = opts;
  j["gold_label"] = q.gold_label;
  Json meta = Json::object();
  if (q.num_hops) meta["num_hops"] = *q.num_hops;
  j["meta"] = meta;
  return j;
}

Question question_from_json(const Json& j) {
  Question q;
  try {
    q.id = j.at("id").get<std::string>();
    q.task_kind = task_kind_from_string(j.at("task_kind").get<std::string>());
    q.context = j.value("context", std::string{});
    q.query = j.at("query").get<std::string>();
    for (const auto& o : j.value("options", Json::array())) {
      q.options.push_back({o.at("label").get<std::string>(), o.value("text", std::string{})});
    }
    q.gold_label = j.at("gold_label").get<std::string>();
    if (j.contains("meta") && j["meta"].contains("num_hops")) {
      q.num_hops = j["meta"]["num_hops"].get<int>();
    }
  } catch (const Json::exception& e) {
    throw SchemaError("question", "json", e.what());
  }
  return q;
}

Json to_json(const CandidateAnswer& a) {
  return Json{{"label", a.label}, {"text", a.text}, {"origin", to_string(a.origin)}};
}

CandidateAnswer candidate_from_json(const Json& j) {
  CandidateAnswer a;
  a.label = j.at("label").get<std::string>();
  a.text = j.value("text", std::string{});
  a.origin = candidate_origin_from_string(j.value("origin", std::string{"dataset_option"}));
  return a;
}

Json to_json(const Abduction& a) {
  return Json{{"stance", to_json(a.stance)},
              {"rationale_text", a.rationale_text},
              {"exchange_id", a.exchange_id}};
}

Abduction abduction_from_json(const Json& j) {
  Abduction a;
  a.stance = candidate_from_json(j.at("stance"));
  a.rationale_text = j.at("rationale_text").get<std::string>();
  a.exchange_id = j.value("exchange_id", std::string{});
  return a;
}

Json to_json(const DebateTurn& t) {
  return Json{{"role", to_string(t.role)},
              {"round_index", t.round_index},
              {"text", t.text},
              {"exchange_id", t.exchange_id}};
}

DebateTurn debate_turn_from_json(const Json& j) {
  DebateTurn t;
  t.role = debate_role_from_string(j.at("role").get<std::string>());
  t.round_index = j.at("round_index").get<int>();
  t.text = j.at("text").get<std::string>();
  t.exchange_id = j.value("exchange_id", std::string{});
  return t;
}

Json to_json(const DebateTranscript& t) {
  Json turns = Json::array();
  for (const auto& turn : t.turns) turns.push_back(to_json(turn));
  return Json{{"stance", to_json(t.stance)},
              {"abduction", to_json(t.abduction)},
              {"turns", turns}};
}

DebateTranscript debate_transcript_from_json(const Json& j) {
  DebateTranscript t;
  t.stance = candidate_from_json(j.at("stance"));
  t.abduction = abduction_from_json(j.at("abduction"));
  for (const auto& turn : j.value("turns", Json::array())) {
    t.turns.push_back(debate_turn_from_json(turn));
  }
  return t;
}

Json to_json(const Judgment& j) {
  return Json{{"predicted_label", j.predicted_label},
              {"raw_text", j.raw_text},
              {"parse_rule", j.parse_rule}};
}

Judgment judgment_from_json(const Json& j) {
  Judgment out;
  out.predicted_label = j.at("predicted_label").get<std::string>();
  out.raw_text = j.value("raw_text", std::string{});
  out.parse_rule = j.value("parse_rule", std::string{});
  return out;
}

Json to_json(const SamplingConfig& s) {
  Json j;
  j["temperature"] = s.temperature;
  j["prompt_variant"] = s.prompt_variant;
  if (s.seed) {
    j["seed"] = *s.seed;
  } else {
    j["seed"] = nullptr;
  }
  return j;
}

SamplingConfig sampling_from_json(const Json& j) {
  SamplingConfig s;
  s.temperature = j.value("temperature", 0.2);
  s.prompt_variant = j.value("prompt_variant", std::string{});
  if (j.contains("seed") && !j["seed"].is_null()) {
    s.seed = j["seed"].get<std::uint64_t>();
  }
  return s;
}

Json to_json(const RunRecord& r) {
  Json j;
  j["question_id"] = r.question_id;
  j["method"] = r.method;
  j["prediction"] = r.prediction;
  j["gold"] = r.gold;
  j["exchange_ids"] = r.exchange_ids;
  j["prompts_used"] = r.prompts_used;
  j["tokens_in"] = r.tokens_in;
  j["tokens_out"] = r.tokens_out;
  j["wall_ms"] = r.wall_ms;
  j["intermediates"] = r.intermediates;
  return j;
}

RunRecord run_record_from_json(const Json& j) {
  RunRecord r;
  try {
    r.question_id = j.at("question_id").get<std::string>();
    r.method = j.at("method").get<std::string>();
    r.prediction = j.at("prediction").get<std::string>();
    r.gold = j.at("gold").get<std::string>();
    r.exchange_ids = j.value("exchange_ids", std::vector<std::string>{});
    r.prompts_used = j.at("prompts_used").get<int>();
    r.tokens_in = j.value("tokens_in", 0LL);
    r.tokens_out = j.value("tokens_out", 0LL);
    r.wall_ms = j.value("wall_ms", 0LL);
    r.intermediates = j.value("intermediates", Json::object());
  } catch (const Json::exception& e) {
    throw SchemaError("run_record", "json", e.what());
  }
  return r;
}

}  // namespace cfmad
