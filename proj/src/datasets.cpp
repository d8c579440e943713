#include "cfmad/datasets.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "cfmad/prompting.hpp"  // canonical_number
#include "cfmad/rng.hpp"

namespace cfmad {
namespace {

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

/// Splits a violation like "gold_label: '...' is not among option labels"
/// into SchemaError's (field, detail) halves.
[[noreturn]] void throw_violation(const std::string& where, const std::string& violation) {
  const std::size_t colon = violation.find(':');
  if (colon == std::string::npos) throw SchemaError(where, "", violation);
  throw SchemaError(where, violation.substr(0, colon), trim(violation.substr(colon + 1)));
}

void check(const std::string& where, Question& q) {
  const auto violations = validate_question(q);
  if (!violations.empty()) throw_violation(where, violations.front());
}

std::vector<QuestionOption> binary_options() {
  return {{kTrueLabel, kTrueLabel}, {kFalseLabel, kFalseLabel}};
}

const Json& require(const Json& record, const char* field, const std::string& where) {
  if (!record.contains(field)) throw SchemaError(where, field, "missing");
  return record.at(field);
}

std::string require_string(const Json& record, const char* field, const std::string& where) {
  const Json& value = require(record, field, where);
  if (!value.is_string()) throw SchemaError(where, field, "expected a string");
  return value.get<std::string>();
}

/// Runs `handle(record, where)` over a JSONL file or a whole-file JSON
/// array, with `where` naming the file and line or record number.
void for_each_record(const DatasetSpec& spec,
                     const std::function<void(const Json&, const std::string&)>& handle) {
  const std::string text = read_text(spec.path);
  const std::size_t first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '[') {
    Json records;
    try {
      records = Json::parse(text);
    } catch (const Json::parse_error& e) {
      throw SchemaError(spec.path, "", std::string("invalid JSON: ") + e.what());
    }
    for (std::size_t i = 0; i < records.size(); ++i) {
      handle(records[i], spec.path + " record " + std::to_string(i + 1));
    }
    return;
  }

  std::istringstream lines(text);
  std::string line;
  int line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::string where = spec.path + ":" + std::to_string(line_no);
    Json record;
    try {
      record = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw SchemaError(where, "", std::string("invalid JSON: ") + e.what());
    }
    handle(record, where);
  }
}

std::vector<Question> load_hover(const DatasetSpec& spec) {
  std::vector<Question> out;
  for_each_record(spec, [&](const Json& record, const std::string& where) {
    Question q;
    q.task_kind = TaskKind::fact_check;
    q.id = record.contains("uid") ? require_string(record, "uid", where)
                                  : "hover-" + std::to_string(out.size());
    q.query = require_string(record, "claim", where);
    if (record.contains("evidence") && record.at("evidence").is_string()) {
      q.context = record.at("evidence").get<std::string>();
    }
    const std::string label = require_string(record, "label", where);
    if (label == "SUPPORTED") {
      q.gold_label = kTrueLabel;
    } else if (label == "NOT_SUPPORTED") {
      q.gold_label = kFalseLabel;
    } else {
      throw SchemaError(where, "label", "expected SUPPORTED or NOT_SUPPORTED, got '" + label +
                                            "'");
    }
    const Json& hops = require(record, "num_hops", where);
    if (!hops.is_number_integer()) throw SchemaError(where, "num_hops", "expected an integer");
    q.num_hops = hops.get<int>();
    q.options = binary_options();
    check(where, q);
    out.push_back(std::move(q));
  });
  return out;
}

std::vector<Question> load_boolq(const DatasetSpec& spec) {
  std::vector<Question> out;
  for_each_record(spec, [&](const Json& record, const std::string& where) {
    Question q;
    q.task_kind = TaskKind::boolean_qa;
    q.id = "boolq-" + spec.split + "-" + std::to_string(out.size());
    q.query = require_string(record, "question", where);
    q.context = require_string(record, "passage", where);
    const Json& answer = require(record, "answer", where);
    if (!answer.is_boolean()) throw SchemaError(where, "answer", "expected a boolean");
    q.gold_label = answer.get<bool>() ? kTrueLabel : kFalseLabel;
    q.options = binary_options();
    check(where, q);
    out.push_back(std::move(q));
  });
  return out;
}

Question cosmosqa_question(const std::string& id, const std::string& context,
                           const std::string& query, const std::vector<std::string>& answers,
                           const std::string& label, const std::string& where) {
  Question q;
  q.task_kind = TaskKind::multi_choice;
  q.id = id;
  q.context = context;
  q.query = query;
  for (std::size_t i = 0; i < answers.size(); ++i) {
    q.options.push_back({std::string(1, static_cast<char>('A' + i)), answers[i]});
  }
  if (label.size() != 1 || label[0] < '0' ||
      label[0] >= static_cast<char>('0' + answers.size())) {
    throw SchemaError(where, "label", "expected an answer index in [0, " +
                                          std::to_string(answers.size()) + "), got '" + label +
                                          "'");
  }
  q.gold_label = std::string(1, static_cast<char>('A' + (label[0] - '0')));
  check(where, q);
  return q;
}

std::vector<Question> load_cosmosqa(const DatasetSpec& spec) {
  std::vector<Question> out;
  if (std::filesystem::path(spec.path).extension() == ".csv") {
    const auto rows = read_csv(spec.path);
    if (rows.empty()) return out;
    std::map<std::string, std::size_t> col;
    for (std::size_t c = 0; c < rows[0].size(); ++c) col[rows[0][c]] = c;
    for (const char* name :
         {"id", "context", "question", "answer0", "answer1", "answer2", "answer3", "label"}) {
      if (!col.count(name)) throw SchemaError(spec.path, name, "missing CSV column");
    }
    for (std::size_t r = 1; r < rows.size(); ++r) {
      const std::string where = spec.path + " row " + std::to_string(r + 1);
      const auto& row = rows[r];
      if (row.size() < rows[0].size()) throw SchemaError(where, "", "short CSV row");
      out.push_back(cosmosqa_question(
          row[col["id"]], row[col["context"]], row[col["question"]],
          {row[col["answer0"]], row[col["answer1"]], row[col["answer2"]], row[col["answer3"]]},
          row[col["label"]], where));
    }
    return out;
  }
  for_each_record(spec, [&](const Json& record, const std::string& where) {
    std::vector<std::string> answers;
    for (const char* field : {"answer0", "answer1", "answer2", "answer3"}) {
      answers.push_back(require_string(record, field, where));
    }
    const Json& label = require(record, "label", where);
    out.push_back(cosmosqa_question(
        require_string(record, "id", where), require_string(record, "context", where),
        require_string(record, "question", where), answers,
        label.is_number_integer() ? std::to_string(label.get<int>())
                                  : label.get<std::string>(),
        where));
  });
  return out;
}

std::vector<Question> load_commonsenseqa(const DatasetSpec& spec) {
  std::vector<Question> out;
  for_each_record(spec, [&](const Json& record, const std::string& where) {
    Question q;
    q.task_kind = TaskKind::multi_choice;
    q.id = require_string(record, "id", where);
    const Json& question = require(record, "question", where);
    q.query = require_string(question, "stem", where);
    const Json& choices = require(question, "choices", where);
    if (!choices.is_array() || choices.empty()) {
      throw SchemaError(where, "choices", "expected a non-empty array");
    }
    for (const auto& choice : choices) {
      const std::string label = require_string(choice, "label", where);
      if (label.size() != 1 || label[0] < 'A' || label[0] > 'E') {
        throw SchemaError(where, "choices", "label outside A-E: '" + label + "'");
      }
      q.options.push_back({label, require_string(choice, "text", where)});
    }
    q.gold_label = require_string(record, "answerKey", where);
    if (!q.find_option(q.gold_label)) {
      throw SchemaError(where, "answerKey", "label outside A-E: '" + q.gold_label + "'");
    }
    check(where, q);
    out.push_back(std::move(q));
  });
  return out;
}

std::string canonical_gold_number(const std::string& raw, const char* field,
                                  const std::string& where) {
  const auto canonical = canonical_number(raw);
  if (!canonical) throw SchemaError(where, field, "expected a numeric answer, got '" + raw + "'");
  return *canonical;
}

std::vector<Question> load_gsm8k(const DatasetSpec& spec) {
  std::vector<Question> out;
  for_each_record(spec, [&](const Json& record, const std::string& where) {
    Question q;
    q.task_kind = TaskKind::open_ended;
    q.id = "gsm8k-" + spec.split + "-" + std::to_string(out.size());
    q.query = require_string(record, "question", where);
    const std::string answer = require_string(record, "answer", where);
    const std::size_t marker = answer.rfind("####");
    if (marker == std::string::npos) {
      throw SchemaError(where, "answer", "missing the #### final-answer marker");
    }
    q.gold_label = canonical_gold_number(trim(answer.substr(marker + 4)), "answer", where);
    check(where, q);
    out.push_back(std::move(q));
  });
  return out;
}

std::vector<Question> load_svamp(const DatasetSpec& spec) {
  std::vector<Question> out;
  for_each_record(spec, [&](const Json& record, const std::string& where) {
    Question q;
    q.task_kind = TaskKind::open_ended;
    q.id = record.contains("ID") ? require_string(record, "ID", where)
                                 : "svamp-" + std::to_string(out.size());
    q.query = trim(require_string(record, "Body", where)) + " " +
              trim(require_string(record, "Question", where));
    const Json& answer = require(record, "Answer", where);
    if (!answer.is_number()) throw SchemaError(where, "Answer", "expected a number");
    q.gold_label = canonical_gold_number(answer.dump(), "Answer", where);
    check(where, q);
    out.push_back(std::move(q));
  });
  return out;
}

std::vector<Question> load_multiarith(const DatasetSpec& spec) {
  std::vector<Question> out;
  for_each_record(spec, [&](const Json& record, const std::string& where) {
    Question q;
    q.task_kind = TaskKind::open_ended;
    q.id = record.contains("iIndex") ? "multiarith-" + require(record, "iIndex", where).dump()
                                     : "multiarith-" + std::to_string(out.size());
    q.query = require_string(record, "sQuestion", where);
    const Json& solutions = require(record, "lSolutions", where);
    if (!solutions.is_array() || solutions.empty() || !solutions[0].is_number()) {
      throw SchemaError(where, "lSolutions", "expected a non-empty numeric array");
    }
    q.gold_label = canonical_gold_number(solutions[0].dump(), "lSolutions", where);
    check(where, q);
    out.push_back(std::move(q));
  });
  return out;
}

std::vector<Question> load_canonical(const DatasetSpec& spec) {
  std::vector<Question> out;
  for_each_record(spec, [&](const Json& record, const std::string& where) {
    Question q;
    try {
      q = question_from_json(record);
    } catch (const SchemaError&) {
      throw;
    } catch (const std::exception& e) {
      throw SchemaError(where, "", e.what());
    }
    check(where, q);
    out.push_back(std::move(q));
  });
  return out;
}

}  // namespace

TaskKind dataset_task_kind(const std::string& name) {
  if (name == "hover") return TaskKind::fact_check;
  if (name == "boolq") return TaskKind::boolean_qa;
  if (name == "cosmosqa" || name == "commonsenseqa" || name == "canonical") {
    return TaskKind::multi_choice;
  }
  if (name == "gsm8k" || name == "svamp" || name == "multiarith") return TaskKind::open_ended;
  throw UnknownDataset(name);
}

std::vector<Question> load(const DatasetSpec& spec) {
  if (spec.hop_filter && spec.name != "hover") {
    throw ConfigError("hop_filter only applies to the hover dataset");
  }
  std::vector<Question> questions;
  if (spec.name == "hover") {
    questions = load_hover(spec);
  } else if (spec.name == "boolq") {
    questions = load_boolq(spec);
  } else if (spec.name == "cosmosqa") {
    questions = load_cosmosqa(spec);
  } else if (spec.name == "commonsenseqa") {
    questions = load_commonsenseqa(spec);
  } else if (spec.name == "gsm8k") {
    questions = load_gsm8k(spec);
  } else if (spec.name == "svamp") {
    questions = load_svamp(spec);
  } else if (spec.name == "multiarith") {
    questions = load_multiarith(spec);
  } else if (spec.name == "canonical") {
    questions = load_canonical(spec);
  } else {
    throw UnknownDataset(spec.name);
  }

  if (spec.hop_filter) {
    std::vector<Question> filtered;
    for (auto& q : questions) {
      if (q.num_hops == *spec.hop_filter) filtered.push_back(std::move(q));
    }
    questions = std::move(filtered);
  }
  if (spec.sample_n) {
    questions = subsample(questions, *spec.sample_n, spec.sample_seed);
  }
  return questions;
}

std::vector<Question> subsample(const std::vector<Question>& questions, int n,
                                std::uint64_t seed) {
  if (n < 0 || static_cast<std::size_t>(n) > questions.size()) {
    throw ConfigError("sample_n = " + std::to_string(n) + " exceeds the dataset size " +
                      std::to_string(questions.size()));
  }
  if (static_cast<std::size_t>(n) == questions.size()) return questions;
  DeterministicRng rng(seed);
  std::vector<Question> out;
  for (const std::size_t i : rng.sample_indices(questions.size(), static_cast<std::size_t>(n))) {
    out.push_back(questions[i]);
  }
  return out;
}

void write_canonical(const std::vector<Question>& questions,
                     const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& q : questions) {
    out << to_json(q).dump() << "\n";
  }
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) {
  const std::string text = read_text(path);
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      row.push_back(std::move(field));
      field.clear();
      rows.push_back(std::move(row));
      row.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  if (!field.empty() || !row.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace cfmad
