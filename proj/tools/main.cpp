#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cfmad/runner.hpp"

namespace {

using cfmad::Json;

/// Flags are collected as a JSON patch and merged over the config file, so
/// precedence (flags > file > defaults) falls out of one code path.
struct ConfigArgs {
  std::string config_path;
  Json patch = Json::object();

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON run-config file");
    add_str(cmd, "--dataset", "Dataset name (hover, boolq, cosmosqa, commonsenseqa, gsm8k, svamp, multiarith, canonical)", {"dataset", "name"});
    add_str(cmd, "--dataset-path", "Path to the dataset file", {"dataset", "path"});
    add_str(cmd, "--split", "Dataset split tag", {"dataset", "split"});
    add_int(cmd, "--hop", "Keep only Hover claims with this hop count", {"dataset", "hop_filter"});
    add_int(cmd, "--sample-n", "Deterministically subsample to n questions", {"dataset", "sample_n"});
    add_u64(cmd, "--sample-seed", "Seed for subsampling", {"dataset", "sample_seed"});
    add_str(cmd, "--method", "cot, self_reflection, self_consistency, mad, self_contrast or cfmad", {"method"});
    add_int(cmd, "--stance-count", "CFMAD stances M", {"cfmad", "stance_count"});
    add_int(cmd, "--debate-rounds", "CFMAD debate rounds R", {"cfmad", "debate_rounds"});
    add_str(cmd, "--variant", "full, direct_judge, replace_self_reflection or replace_mad", {"cfmad", "variant"});
    add_dbl(cmd, "--temperature", "Sampling temperature for CFMAD calls", {"cfmad", "temperature"});
    add_int(cmd, "--cot-samples", "CoT samples for stance selection", {"cfmad", "cot_samples"});
    add_int(cmd, "--n-samples", "Self-Consistency sample count", {"baseline", "n_samples"});
    add_int(cmd, "--n-agents", "MAD agent count", {"baseline", "n_agents"});
    add_int(cmd, "--n-rounds", "MAD round count", {"baseline", "n_rounds"});
    add_dbl(cmd, "--baseline-temperature", "Override the baseline method's temperature", {"baseline", "temperature"});
    add_str(cmd, "--base-url", "OpenAI-compatible endpoint base URL", {"backend", "base_url"});
    add_str(cmd, "--model", "Model name sent to the endpoint", {"backend", "model_name"});
    add_str(cmd, "--api-key-env", "Environment variable holding the API key", {"backend", "api_key_env"});
    add_int(cmd, "--timeout-s", "HTTP timeout in seconds", {"backend", "timeout_s"});
    add_str(cmd, "--cache-dir", "Response cache directory (empty disables)", {"backend", "cache_dir"});
    add_int(cmd, "--max-tokens", "max_tokens sent to the endpoint", {"backend", "max_tokens"});
    add_str(cmd, "--mock-script", "Scripted mock backend file (overrides HTTP)", {"mock_script"});
    add_u64(cmd, "--seed", "Run seed", {"seed"});
    add_str(cmd, "--output-dir", "Directory for transcripts and summaries", {"output_dir"});
    add_str(cmd, "--run-name", "Transcript file stem (derived when empty)", {"run_name"});
    add_int(cmd, "--max-concurrency", "Concurrent question workers", {"max_concurrency"});
    add_str(cmd, "--templates-dir", "Prompt template directory", {"templates_dir"});
  }

  cfmad::RunConfig resolve() const {
    Json merged = Json::object();
    if (!config_path.empty()) {
      std::ifstream in(config_path, std::ios::binary);
      if (!in) throw cfmad::IoError("cannot open " + config_path);
      std::ostringstream buf;
      buf << in.rdbuf();
      try {
        merged = Json::parse(buf.str());
      } catch (const Json::parse_error& e) {
        throw cfmad::ConfigError("config " + config_path + ": " + e.what());
      }
    }
    merge(merged, patch);
    return cfmad::run_config_from_json(merged);
  }

 private:
  static void merge(Json& base, const Json& over) {
    for (const auto& [key, value] : over.items()) {
      if (value.is_object() && base.contains(key) && base[key].is_object()) {
        merge(base[key], value);
      } else {
        base[key] = value;
      }
    }
  }

  Json& slot(const std::vector<std::string>& path) {
    Json* cur = &patch;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
      cur = &((*cur)[path[i]]);
      if (!cur->is_object()) *cur = Json::object();
    }
    return (*cur)[path.back()];
  }

  void add_str(CLI::App* cmd, const std::string& flag, const std::string& help,
               std::vector<std::string> path) {
    cmd->add_option_function<std::string>(
        flag, [this, path = std::move(path)](const std::string& v) { slot(path) = v; }, help);
  }
  void add_int(CLI::App* cmd, const std::string& flag, const std::string& help,
               std::vector<std::string> path) {
    cmd->add_option_function<int>(
        flag, [this, path = std::move(path)](int v) { slot(path) = v; }, help);
  }
  void add_u64(CLI::App* cmd, const std::string& flag, const std::string& help,
               std::vector<std::string> path) {
    cmd->add_option_function<std::uint64_t>(
        flag, [this, path = std::move(path)](std::uint64_t v) { slot(path) = v; }, help);
  }
  void add_dbl(CLI::App* cmd, const std::string& flag, const std::string& help,
               std::vector<std::string> path) {
    cmd->add_option_function<double>(
        flag, [this, path = std::move(path)](double v) { slot(path) = v; }, help);
  }
};

void print_sweep_table(const std::vector<cfmad::SweepRow>& rows) {
  std::printf("%-14s %6s %9s %9s %19s\n", "axis", "value", "accuracy", "macro_f1",
              "prompts_per_sample");
  for (const auto& row : rows) {
    std::string f1 = row.macro_f1 ? [](double v) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.4f", v);
      return std::string(buf);
    }(*row.macro_f1)
                                  : std::string("-");
    std::printf("%-14s %6d %9.4f %9s %19.2f\n", row.axis.c_str(), row.value, row.accuracy,
                f1.c_str(), row.prompts_per_sample);
  }
}

int dispatch(int argc, char** argv) {
  CLI::App app{"CFMAD: counterfactual multi-agent debate runner"};
  app.require_subcommand(1);

  // import
  auto* import_cmd = app.add_subcommand("import", "Normalize an upstream dataset file into canonical JSONL");
  std::string import_name, import_input, import_output, import_split = "validation";
  int import_hop = -1, import_sample_n = -1;
  std::uint64_t import_sample_seed = 0;
  import_cmd->add_option("--dataset", import_name, "Dataset name")->required();
  import_cmd->add_option("--input", import_input, "Upstream dataset file")->required();
  import_cmd->add_option("--output", import_output, "Canonical JSONL output path")->required();
  import_cmd->add_option("--split", import_split, "Split tag used in generated ids");
  auto* import_hop_opt = import_cmd->add_option("--hop", import_hop, "Hover hop filter");
  auto* import_n_opt = import_cmd->add_option("--sample-n", import_sample_n, "Subsample to n questions");
  import_cmd->add_option("--sample-seed", import_sample_seed, "Seed for subsampling");

  // run / sweep
  auto* run_cmd = app.add_subcommand("run", "Execute the configured method over a dataset");
  ConfigArgs run_args;
  run_args.attach(run_cmd);

  auto* sweep_cmd = app.add_subcommand("sweep", "Run CFMAD across stance_count or debate_rounds values");
  ConfigArgs sweep_args;
  sweep_args.attach(sweep_cmd);
  std::string sweep_axis;
  std::vector<int> sweep_values;
  sweep_cmd->add_option("--axis", sweep_axis, "stance_count or debate_rounds")->required();
  sweep_cmd->add_option("--values", sweep_values, "Axis values, e.g. --values 2 3 4 5")
      ->required()
      ->delimiter(',');

  // analyze / replay
  auto* analyze_cmd = app.add_subcommand("analyze", "Compute a diagnostic report from a transcript");
  std::string analyze_transcript, analyze_kind;
  analyze_cmd->add_option("--transcript", analyze_transcript, "Transcript JSONL path")->required();
  analyze_cmd->add_option("--analysis", analyze_kind,
                          "overconfidence, stance_change, judge_validity or tokens")
      ->required();

  auto* replay_cmd = app.add_subcommand("replay", "Re-score a transcript without any backend calls");
  std::string replay_transcript;
  replay_cmd->add_option("--transcript", replay_transcript, "Transcript JSONL path")->required();

  CLI11_PARSE(app, argc, argv);

  if (import_cmd->parsed()) {
    cfmad::DatasetSpec spec;
    spec.name = import_name;
    spec.path = import_input;
    spec.split = import_split;
    spec.task_kind = cfmad::dataset_task_kind(import_name);
    if (import_hop_opt->count()) spec.hop_filter = import_hop;
    if (import_n_opt->count()) spec.sample_n = import_sample_n;
    spec.sample_seed = import_sample_seed;
    const std::vector<cfmad::Question> questions = cfmad::load(spec);
    cfmad::write_canonical(questions, import_output);
    std::cout << "wrote " << questions.size() << " questions to " << import_output << "\n";
    return 0;
  }
  if (run_cmd->parsed()) {
    const cfmad::RunSummary summary = cfmad::run(run_args.resolve());
    std::cout << cfmad::to_json(summary).dump(2) << "\n";
    return 0;
  }
  if (sweep_cmd->parsed()) {
    const auto rows = cfmad::sweep(sweep_args.resolve(), sweep_axis, sweep_values);
    print_sweep_table(rows);
    std::cout << cfmad::to_json(rows).dump(2) << "\n";
    return 0;
  }
  if (analyze_cmd->parsed()) {
    std::cout << cfmad::analyze(analyze_transcript, analyze_kind).dump(2) << "\n";
    return 0;
  }
  if (replay_cmd->parsed()) {
    std::cout << cfmad::replay(replay_transcript).dump(2) << "\n";
    return 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const cfmad::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const cfmad::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
