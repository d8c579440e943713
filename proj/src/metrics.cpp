#include "cfmad/metrics.hpp"

#include <algorithm>
#include <cstdio>

namespace cfmad {
namespace {

bool is_correct(const RunRecord& record) {
  return labels_equal(record.prediction, record.gold);
}

bool equal_label(const std::string& a, const std::string& b) { return labels_equal(a, b); }

std::vector<std::string> intermediate_labels(const RunRecord& record, const std::string& method,
                                             const char* key) {
  if (!record.intermediates.is_object() || !record.intermediates.contains(key) ||
      !record.intermediates[key].is_array()) {
    throw MissingIntermediates(method, record.question_id);
  }
  std::vector<std::string> labels;
  for (const auto& v : record.intermediates[key]) labels.push_back(v.get<std::string>());
  return labels;
}

std::string intermediate_label(const RunRecord& record, const std::string& method,
                               const char* key) {
  if (!record.intermediates.is_object() || !record.intermediates.contains(key) ||
      !record.intermediates[key].is_string()) {
    throw MissingIntermediates(method, record.question_id);
  }
  return record.intermediates[key].get<std::string>();
}

/// All-but-one of the samples agree on one wrong label ("six out of the
/// seven" at the default sample count); unparsed samples never count
/// toward the agreeing block.
bool consistency_overconfident(const std::vector<std::string>& samples,
                               const std::string& gold) {
  if (samples.empty()) return false;
  const std::size_t threshold = std::max<std::size_t>(samples.size() - 1, 1);
  std::map<std::string, std::size_t> counts;
  for (const auto& label : samples) {
    if (label != kUnparsed) counts[normalize_label(label)] += 1;
  }
  for (const auto& [label, count] : counts) {
    if (count >= threshold && !equal_label(label, gold)) return true;
  }
  return false;
}

bool unanimous_wrong_initials(const std::vector<std::string>& initials, const std::string& gold) {
  if (initials.empty()) return false;
  for (const auto& label : initials) {
    if (label == kUnparsed || !equal_label(label, initials.front())) return false;
  }
  return !equal_label(initials.front(), gold);
}

bool record_overconfident(const std::string& method, const RunRecord& record) {
  if (method == "self_reflection") {
    const std::string r0 = intermediate_label(record, method, "r0_label");
    const std::string r1 = intermediate_label(record, method, "r1_label");
    return r0 != kUnparsed && !equal_label(r0, record.gold) && equal_label(r1, r0);
  }
  if (method == "self_consistency") {
    return consistency_overconfident(intermediate_labels(record, method, "sample_labels"),
                                     record.gold);
  }
  if (method == "mad" || method == "self_contrast") {
    return unanimous_wrong_initials(intermediate_labels(record, method, "initial_labels"),
                                    record.gold);
  }
  throw ConfigError("no overconfidence rule for method '" + method + "'");
}

double ratio(double numerator, double denominator) {
  return denominator == 0.0 ? 0.0 : numerator / denominator;
}

}  // namespace

ScoreReport macro_f1(const std::vector<LabelPair>& pairs) {
  if (pairs.empty()) throw EmptyInput("macro_f1 needs at least one (gold, pred) pair");

  ScoreReport report;
  report.n = static_cast<int>(pairs.size());
  int correct = 0;
  double f1_sum = 0.0;
  for (const std::string& cls : {kTrueLabel, kFalseLabel}) {
    int tp = 0, predicted = 0, actual = 0;
    for (const auto& [gold, pred] : pairs) {
      const bool g = equal_label(gold, cls);
      const bool p = equal_label(pred, cls);
      if (g) ++actual;
      if (p) ++predicted;
      if (g && p) ++tp;
    }
    ClassScore score;
    score.precision = ratio(tp, predicted);
    score.recall = ratio(tp, actual);
    score.f1 = ratio(2.0 * score.precision * score.recall, score.precision + score.recall);
    f1_sum += score.f1;
    report.per_class[cls] = score;
  }
  for (const auto& [gold, pred] : pairs) {
    if (equal_label(gold, pred)) ++correct;
  }
  report.accuracy = static_cast<double>(correct) / static_cast<double>(pairs.size());
  report.macro_f1 = f1_sum / 2.0;
  return report;
}

double accuracy(const std::vector<LabelPair>& pairs) {
  if (pairs.empty()) throw EmptyInput("accuracy needs at least one (gold, pred) pair");
  int correct = 0;
  for (const auto& [gold, pred] : pairs) {
    if (equal_label(gold, pred)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(pairs.size());
}

ScoreReport score_records(const std::vector<RunRecord>& records, TaskKind kind,
                          const std::string& method, const std::string& dataset) {
  std::vector<LabelPair> pairs;
  for (const auto& record : records) pairs.emplace_back(record.gold, record.prediction);
  ScoreReport report;
  if (is_binary(kind)) {
    report = macro_f1(pairs);
  } else {
    report.n = static_cast<int>(pairs.size());
    report.accuracy = accuracy(pairs);
  }
  report.method = method;
  report.dataset = dataset;
  return report;
}

OverconfidenceReport classify_overconfident(const std::string& method,
                                            const std::vector<RunRecord>& records) {
  OverconfidenceReport report;
  report.method = method;
  for (const auto& record : records) {
    if (is_correct(record)) continue;
    ++report.n_incorrect;
    if (record_overconfident(method, record)) ++report.n_overconfident;
  }
  report.proportion = ratio(report.n_overconfident, std::max(report.n_incorrect, 1));
  return report;
}

StanceChangeReport classify_stance_change(const std::vector<RunRecord>& records) {
  StanceChangeReport report;
  for (const auto& record : records) {
    const auto stances = intermediate_labels(record, "cfmad", "stance_labels");
    const auto finals = intermediate_labels(record, "cfmad", "agent_final_labels");
    if (stances.size() != finals.size()) {
      throw MissingIntermediates("cfmad", record.question_id);
    }
    const bool binary_stances =
        stances.size() == 2 &&
        std::all_of(stances.begin(), stances.end(), [](const std::string& s) {
          return labels_equal(s, kTrueLabel) || labels_equal(s, kFalseLabel);
        });
    if (!binary_stances) {
      throw ConfigError("stance-change analysis needs binary True/False stances (question " +
                        record.question_id + ")");
    }
    ++report.n_records;
    for (std::size_t i = 0; i < stances.size(); ++i) {
      const bool factual = equal_label(stances[i], record.gold);
      if (finals[i] == kUnparsed) {
        ++report.indeterminate;
      } else if (factual) {
        equal_label(finals[i], record.gold) ? ++report.unchanged_factual : ++report.invalid;
      } else {
        equal_label(finals[i], record.gold) ? ++report.valid : ++report.unchanged_counterfactual;
      }
    }
  }
  return report;
}

JudgeValidityReport judge_validity(const std::vector<RunRecord>& records) {
  JudgeValidityReport report;
  for (const auto& record : records) {
    const auto finals = intermediate_labels(record, "cfmad", "agent_final_labels");
    ++report.n_records;
    const bool all_parsed = std::none_of(finals.begin(), finals.end(),
                                         [](const std::string& f) { return f == kUnparsed; });
    const bool consensus =
        std::all_of(finals.begin(), finals.end(),
                    [&](const std::string& f) { return equal_label(f, finals.front()); });
    if (finals.size() < 2 || !all_parsed || consensus) continue;
    ++report.n_inconsistent;
    is_correct(record) ? ++report.n_valid : ++report.n_invalid;
  }
  report.proportion_valid = ratio(report.n_valid, std::max(report.n_inconsistent, 1));
  return report;
}

std::vector<TokenRow> token_report(const std::vector<RunRecord>& records) {
  std::vector<std::string> order;
  struct Totals {
    int n = 0;
    long long prompts = 0;
    long long tokens = 0;
  };
  std::map<std::string, Totals> by_method;
  for (const auto& record : records) {
    if (!by_method.count(record.method)) order.push_back(record.method);
    Totals& t = by_method[record.method];
    t.n += 1;
    t.prompts += record.prompts_used;
    t.tokens += record.tokens_in + record.tokens_out;
  }
  std::vector<TokenRow> rows;
  for (const auto& method : order) {
    const Totals& t = by_method[method];
    TokenRow row;
    row.method = method;
    row.n = t.n;
    row.prompts_per_sample = ratio(static_cast<double>(t.prompts), t.n);
    row.tokens_per_prompt = ratio(static_cast<double>(t.tokens), static_cast<double>(t.prompts));
    row.tokens_per_sample = ratio(static_cast<double>(t.tokens), t.n);
    rows.push_back(row);
  }
  return rows;
}

Json to_json(const ScoreReport& report) {
  Json j;
  j["method"] = report.method;
  j["dataset"] = report.dataset;
  j["n"] = report.n;
  j["accuracy"] = report.accuracy;
  if (report.macro_f1) {
    j["macro_f1"] = *report.macro_f1;
    Json per_class;
    for (const auto& [cls, score] : report.per_class) {
      per_class[cls] = Json{{"precision", score.precision},
                            {"recall", score.recall},
                            {"f1", score.f1}};
    }
    j["per_class"] = std::move(per_class);
  }
  return j;
}

Json to_json(const OverconfidenceReport& report) {
  return Json{{"method", report.method},
              {"n_incorrect", report.n_incorrect},
              {"n_overconfident", report.n_overconfident},
              {"proportion", report.proportion}};
}

Json to_json(const StanceChangeReport& report) {
  return Json{{"n_records", report.n_records},
              {"valid", report.valid},
              {"invalid", report.invalid},
              {"unchanged_factual", report.unchanged_factual},
              {"unchanged_counterfactual", report.unchanged_counterfactual},
              {"indeterminate", report.indeterminate}};
}

Json to_json(const JudgeValidityReport& report) {
  return Json{{"n_records", report.n_records},
              {"n_inconsistent", report.n_inconsistent},
              {"n_valid", report.n_valid},
              {"n_invalid", report.n_invalid},
              {"proportion_valid", report.proportion_valid}};
}

Json to_json(const std::vector<TokenRow>& rows) {
  Json j = Json::array();
  for (const auto& row : rows) {
    j.push_back(Json{{"method", row.method},
                     {"n", row.n},
                     {"prompts_per_sample", row.prompts_per_sample},
                     {"tokens_per_prompt", row.tokens_per_prompt},
                     {"tokens_per_sample", row.tokens_per_sample}});
  }
  return j;
}

std::string render_token_table(const std::vector<TokenRow>& rows) {
  auto fmt = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return std::string(buf);
  };
  std::vector<std::vector<std::string>> cells = {
      {"method", "n", "prompts/sample", "tokens/prompt", "tokens/sample"}};
  for (const auto& row : rows) {
    cells.push_back({row.method, std::to_string(row.n), fmt(row.prompts_per_sample),
                     fmt(row.tokens_per_prompt), fmt(row.tokens_per_sample)});
  }
  std::vector<std::size_t> widths(cells[0].size(), 0);
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], row[c].size());
  }
  std::string out;
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      out += row[c];
      if (c + 1 < row.size()) out += std::string(widths[c] - row[c].size() + 2, ' ');
    }
    out += "\n";
  }
  return out;
}

}  // namespace cfmad
