#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cfmad/backend.hpp"
#include "cfmad/baselines.hpp"
#include "cfmad/core.hpp"
#include "cfmad/datasets.hpp"
#include "cfmad/metrics.hpp"
#include "cfmad/pipeline.hpp"
#include "cfmad/prompting.hpp"

namespace cfmad {

/// Optional baseline knobs from the config file or flags; anything unset
/// keeps the method's own default (notably self_consistency's temperature
/// of 1.0).
struct BaselineOverrides {
  std::optional<int> n_samples;
  std::optional<int> n_agents;
  std::optional<int> n_rounds;
  std::optional<double> temperature;

  BaselineConfig resolve(BaselineMethod method) const;
};

struct RunConfig {
  DatasetSpec dataset;
  std::string method = "cot";  // cot, self_reflection, self_consistency, mad,
                               // self_contrast or cfmad
  CfmadConfig cfmad;
  BaselineOverrides baseline;
  HttpBackendConfig backend;
  std::string mock_script;     // path to a scripted backend; overrides backend
  std::uint64_t seed = 0;
  std::string output_dir = "runs";
  std::string run_name;        // transcript file stem; derived when empty
  int max_concurrency = 4;
  std::string templates_dir;

  /// The transcript file this configuration writes.
  std::filesystem::path transcript_path() const;
};

void validate(const RunConfig& config);
RunConfig run_config_from_json(const Json& j);
Json to_json(const RunConfig& config);
/// Reads and validates a JSON config file.
RunConfig load_run_config(const std::filesystem::path& path);

/// One fully processed question: the record plus every backend exchange it
/// issued, appended to the transcript as a single JSON line.
struct TranscriptLine {
  std::string dataset;
  std::string method;
  TaskKind task_kind = TaskKind::multi_choice;
  RunRecord record;
  std::vector<ChatExchange> exchanges;
};

Json to_json(const TranscriptLine& line);
TranscriptLine transcript_line_from_json(const Json& j);

struct RunSummary {
  std::filesystem::path transcript;
  int n_questions = 0;
  int n_executed = 0;  // freshly run this invocation
  int n_resumed = 0;   // taken from the existing transcript
  int n_errors = 0;    // BACKEND_ERROR or UNPARSED-by-exception records
  ScoreReport score;
  std::vector<TokenRow> tokens;
  std::optional<OverconfidenceReport> overconfidence;
};

Json to_json(const RunSummary& summary);

/// Processes one question end to end under a per-question seed derived from
/// (config.seed, question id). Never throws for per-question failures:
/// backend errors yield prediction BACKEND_ERROR, other errors UNPARSED.
TranscriptLine process_question(const Question& q, const RunConfig& config,
                                ChatBackend& backend, const TemplateRegistry& templates);

/// Executes the configured method over the dataset, appending transcript
/// lines in dataset order. Questions already present in the transcript are
/// skipped; a corrupt tail is truncated and re-executed.
RunSummary run(const RunConfig& config);
RunSummary run(const RunConfig& config, ChatBackend& backend, const TemplateRegistry& templates);

struct SweepRow {
  std::string axis;
  int value = 0;
  double accuracy = 0.0;
  std::optional<double> macro_f1;
  double prompts_per_sample = 0.0;
};

Json to_json(const std::vector<SweepRow>& rows);

/// One run per value along "stance_count" or "debate_rounds"; cfmad only.
std::vector<SweepRow> sweep(const RunConfig& config, const std::string& axis,
                            const std::vector<int>& values);

/// Reads a transcript tolerantly: corrupt lines produce a warning entry and
/// are skipped, everything else is returned in file order.
struct TranscriptFile {
  std::vector<TranscriptLine> lines;
  std::vector<std::string> warnings;
};
TranscriptFile read_transcript(const std::filesystem::path& path);

/// Pure replay over a transcript file; never touches a backend.
/// `analysis` is one of overconfidence, stance_change, judge_validity or
/// tokens. The result carries the report plus any corrupt-line warnings.
Json analyze(const std::filesystem::path& transcript_path, const std::string& analysis);

/// Re-scores a transcript from its records alone.
Json replay(const std::filesystem::path& transcript_path);

}  // namespace cfmad
