#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cfmad/core.hpp"

namespace cfmad {

class EmptyInput : public Error {
 public:
  using Error::Error;
};

/// A record lacks the per-method intermediate answers an analysis needs.
class MissingIntermediates : public Error {
 public:
  MissingIntermediates(std::string method, std::string question_id)
      : Error("question '" + question_id + "': record lacks the intermediates required for " +
              method),
        method_(std::move(method)),
        question_id_(std::move(question_id)) {}
  const std::string& method() const { return method_; }
  const std::string& question_id() const { return question_id_; }

 private:
  std::string method_;
  std::string question_id_;
};

/// (gold, predicted) label pairs; UNPARSED and BACKEND_ERROR predictions
/// always score as wrong.
using LabelPair = std::pair<std::string, std::string>;

struct ClassScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct ScoreReport {
  std::string method;
  std::string dataset;
  int n = 0;
  double accuracy = 0.0;
  std::optional<double> macro_f1;  // binary tasks only
  std::map<std::string, ClassScore> per_class;
};

struct OverconfidenceReport {
  std::string method;
  int n_incorrect = 0;
  int n_overconfident = 0;
  double proportion = 0.0;  // n_overconfident / max(n_incorrect, 1)
};

struct StanceChangeReport {
  int n_records = 0;
  int valid = 0;                    // counterfactual agent moved to the gold label
  int invalid = 0;                  // factual agent moved off the gold label
  int unchanged_factual = 0;
  int unchanged_counterfactual = 0;
  int indeterminate = 0;            // final rebuttal did not parse
};

struct JudgeValidityReport {
  int n_records = 0;
  int n_inconsistent = 0;           // agents still disagreed after the debate
  int n_valid = 0;                  // judge picked the gold label
  int n_invalid = 0;
  double proportion_valid = 0.0;    // n_valid / max(n_inconsistent, 1)
};

struct TokenRow {
  std::string method;
  int n = 0;
  double prompts_per_sample = 0.0;
  double tokens_per_prompt = 0.0;
  double tokens_per_sample = 0.0;
};

/// Two-class macro-F1 over True/False with per-class precision/recall/F1;
/// 0/0 ratios are 0. Throws EmptyInput on an empty list.
ScoreReport macro_f1(const std::vector<LabelPair>& pairs);

/// Fraction of pairs whose labels match after normalization. Throws
/// EmptyInput on an empty list.
double accuracy(const std::vector<LabelPair>& pairs);

/// Scores a batch of records: accuracy always, macro-F1 when the task is
/// binary.
ScoreReport score_records(const std::vector<RunRecord>& records, TaskKind kind,
                          const std::string& method, const std::string& dataset);

/// Applies the per-method overconfidence rule to every incorrect record:
/// self_reflection counts a revision that repeats the initial wrong label;
/// self_consistency counts all-but-one samples agreeing on one wrong label;
/// mad and self_contrast count three identical wrong initial answers.
OverconfidenceReport classify_overconfident(const std::string& method,
                                            const std::vector<RunRecord>& records);

/// Buckets each debate agent of binary-task records by whether its final
/// rebuttal kept or abandoned its preset stance relative to the gold label.
StanceChangeReport classify_stance_change(const std::vector<RunRecord>& records);

/// Restricted to records whose agents still disagreed after the debate:
/// how often the judge's final answer was correct.
JudgeValidityReport judge_validity(const std::vector<RunRecord>& records);

/// Per-method cost accounting over (prompt, token) counts; rows appear in
/// first-seen method order.
std::vector<TokenRow> token_report(const std::vector<RunRecord>& records);

Json to_json(const ScoreReport& report);
Json to_json(const OverconfidenceReport& report);
Json to_json(const StanceChangeReport& report);
Json to_json(const JudgeValidityReport& report);
Json to_json(const std::vector<TokenRow>& rows);

/// Aligned-column text rendering of the token table.
std::string render_token_table(const std::vector<TokenRow>& rows);

}  // namespace cfmad
