#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "cfmad/fixtures.hpp"
#include "cfmad/runner.hpp"

using namespace cfmad;
namespace fs = std::filesystem;

namespace {

fs::path data_dir() {
  if (const char* env = std::getenv("CFMAD_TEST_DATA_DIR")) return fs::path(env);
  return fs::path("tests/data");
}

std::string fixture_script_path(const std::string& name) {
  return (resolve_fixtures_dir() / (name + ".json")).string();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("cfmad_runner_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

/// cfmad over the bundled ten-question multi-choice deck, answered by the
/// reusable substring script.
RunConfig mc10_cfmad_config(const fs::path& out_dir) {
  RunConfig config;
  config.dataset.name = "canonical";
  config.dataset.path = (data_dir() / "mc10.jsonl").string();
  config.method = "cfmad";
  config.mock_script = fixture_script_path("allmethods_multichoice");
  config.output_dir = out_dir.string();
  config.max_concurrency = 2;
  return config;
}

std::vector<std::string> transcript_lines_without_timing(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::vector<std::string> out;
  std::string raw;
  while (std::getline(in, raw)) {
    if (raw.empty()) continue;
    Json j = Json::parse(raw);
    j["record"]["wall_ms"] = 0;
    out.push_back(j.dump());
  }
  return out;
}

void keep_first_lines(const fs::path& path, std::size_t n) {
  std::ifstream in(path);
  std::vector<std::string> lines;
  std::string raw;
  while (std::getline(in, raw)) lines.push_back(raw);
  in.close();
  REQUIRE(lines.size() >= n);
  std::ofstream out(path, std::ios::trunc);
  for (std::size_t i = 0; i < n; ++i) out << lines[i] << "\n";
}

}  // namespace

TEST_CASE("a minimal config fills in the documented defaults") {
  const RunConfig config =
      run_config_from_json(Json{{"dataset", {{"name", "hover"}, {"path", "claims.jsonl"}}}});
  CHECK(config.method == "cot");
  CHECK(config.dataset.split == "validation");
  CHECK(config.dataset.task_kind == TaskKind::fact_check);
  CHECK(config.seed == 0);
  CHECK(config.output_dir == "runs");
  CHECK(config.max_concurrency == 4);
  CHECK(config.cfmad.stance_count == 2);
  CHECK(config.cfmad.debate_rounds == 1);
  CHECK_FALSE(config.baseline.n_samples.has_value());
}

TEST_CASE("unknown configuration keys fail loudly at any depth") {
  const Json base{{"dataset", {{"name", "hover"}, {"path", "x.jsonl"}}}};

  Json top = base;
  top["datasets"] = Json::object();  // typo
  CHECK_THROWS_AS(run_config_from_json(top), ConfigError);

  Json nested = base;
  nested["dataset"]["pathh"] = "x";
  CHECK_THROWS_AS(run_config_from_json(nested), ConfigError);

  Json cfmad = base;
  cfmad["cfmad"] = {{"stances", 3}};
  CHECK_THROWS_AS(run_config_from_json(cfmad), ConfigError);

  Json retry = base;
  retry["backend"] = {{"retry", {{"attempts", 2}}}};
  CHECK_THROWS_AS(run_config_from_json(retry), ConfigError);
}

TEST_CASE("configs survive a serialization round trip") {
  Json j{{"dataset",
          {{"name", "hover"},
           {"path", "claims.jsonl"},
           {"split", "dev"},
           {"hop_filter", 3},
           {"sample_n", 100},
           {"sample_seed", 11}}},
         {"method", "cfmad"},
         {"cfmad", {{"stance_count", 3}, {"debate_rounds", 2}, {"variant", "full"}}},
         {"baseline", {{"n_samples", 5}}},
         {"backend", {{"base_url", "http://localhost:1"}, {"model_name", "m"}}},
         {"mock_script", "script.json"},
         {"seed", 42},
         {"output_dir", "out"},
         {"run_name", "probe"},
         {"max_concurrency", 2},
         {"templates_dir", "templates"}};
  const RunConfig once = run_config_from_json(j);
  const RunConfig twice = run_config_from_json(to_json(once));
  CHECK(to_json(once) == to_json(twice));
  CHECK(once.cfmad.stance_count == 3);
  CHECK(once.dataset.hop_filter == 3);
  CHECK(*once.baseline.n_samples == 5);
}

TEST_CASE("config files load and reject broken JSON") {
  const fs::path dir = fresh_dir("config");
  const fs::path good = dir / "good.json";
  std::ofstream(good) << R"({"dataset": {"name": "boolq", "path": "b.jsonl"}, "seed": 9})";
  const RunConfig config = load_run_config(good);
  CHECK(config.seed == 9);
  CHECK(config.dataset.task_kind == TaskKind::boolean_qa);

  const fs::path bad = dir / "bad.json";
  std::ofstream(bad) << "{ nope";
  CHECK_THROWS_AS(load_run_config(bad), ConfigError);
  CHECK_THROWS_AS(load_run_config(dir / "absent.json"), IoError);
}

TEST_CASE("config validation catches inconsistent settings") {
  RunConfig config;
  config.dataset.name = "hover";
  config.dataset.path = "x.jsonl";
  CHECK_NOTHROW(validate(config));

  RunConfig bad = config;
  bad.method = "telepathy";
  CHECK_THROWS_AS(validate(bad), ConfigError);

  bad = config;
  bad.dataset.path.clear();
  CHECK_THROWS_AS(validate(bad), ConfigError);

  bad = config;
  bad.max_concurrency = 0;
  CHECK_THROWS_AS(validate(bad), ConfigError);

  bad = config;
  bad.method = "cfmad";
  bad.cfmad.variant = CfmadVariant::direct_judge;  // debate_rounds still 1
  CHECK_THROWS_AS(validate(bad), ConfigError);

  bad = config;
  bad.dataset.name = "trivia";
  CHECK_THROWS_AS(validate(bad), UnknownDataset);

  // neither a script nor a live endpoint configured
  RunConfig neither = config;
  neither.dataset.path = (data_dir() / "hover_sample.jsonl").string();
  neither.output_dir = fresh_dir("neither").string();
  CHECK_THROWS_AS(run(neither), ConfigError);
}

TEST_CASE("transcript paths derive a descriptive stem when unnamed") {
  RunConfig config;
  config.dataset.name = "hover";
  config.dataset.path = "x.jsonl";
  config.output_dir = "out";
  config.run_name = "probe";
  CHECK(config.transcript_path() == fs::path("out") / "probe.jsonl");

  config.run_name.clear();
  config.method = "cfmad";
  config.dataset.hop_filter = 3;
  config.cfmad.stance_count = 2;
  config.cfmad.debate_rounds = 1;
  config.seed = 5;
  CHECK(config.transcript_path() == fs::path("out") / "hover-3hop-cfmad-full-M2-R1-seed5.jsonl");
}

TEST_CASE("baseline overrides only replace what they set") {
  BaselineOverrides overrides;
  overrides.n_samples = 9;
  const BaselineConfig sc = overrides.resolve(BaselineMethod::self_consistency);
  CHECK(sc.n_samples == 9);
  CHECK(sc.temperature == doctest::Approx(1.0));  // method default kept

  overrides.temperature = 0.7;
  const BaselineConfig mad = overrides.resolve(BaselineMethod::mad);
  CHECK(mad.temperature == doctest::Approx(0.7));
  CHECK(mad.n_agents == 3);
}

TEST_CASE("a run is byte-deterministic apart from wall-clock timings") {
  const fs::path dir_a = fresh_dir("det_a");
  const fs::path dir_b = fresh_dir("det_b");
  const RunSummary first = run(mc10_cfmad_config(dir_a));
  const RunSummary second = run(mc10_cfmad_config(dir_b));

  CHECK(first.n_questions == 10);
  CHECK(first.n_executed == 10);
  CHECK(first.n_resumed == 0);
  CHECK(first.n_errors == 0);
  CHECK(first.score.accuracy == doctest::Approx(0.6).epsilon(1e-12));
  CHECK_FALSE(first.score.macro_f1.has_value());
  REQUIRE(first.tokens.size() == 1);
  CHECK(first.tokens[0].method == "cfmad");
  CHECK(first.tokens[0].prompts_per_sample == doctest::Approx(10.0));

  const auto lines_a = transcript_lines_without_timing(first.transcript);
  const auto lines_b = transcript_lines_without_timing(second.transcript);
  REQUIRE(lines_a.size() == 10);
  CHECK(lines_a == lines_b);

  fs::path summary_path = first.transcript;
  summary_path.replace_extension(".summary.json");
  CHECK(fs::exists(summary_path));
}

TEST_CASE("an interrupted run resumes exactly the missing questions") {
  const fs::path dir = fresh_dir("resume");
  const RunConfig config = mc10_cfmad_config(dir);
  run(config);
  const auto complete = transcript_lines_without_timing(config.transcript_path());

  keep_first_lines(config.transcript_path(), 4);
  const RunSummary resumed = run(config);
  CHECK(resumed.n_questions == 10);
  CHECK(resumed.n_resumed == 4);
  CHECK(resumed.n_executed == 6);

  const auto after = transcript_lines_without_timing(config.transcript_path());
  CHECK(after == complete);

  // a third invocation finds nothing left to do
  const RunSummary idle = run(config);
  CHECK(idle.n_resumed == 10);
  CHECK(idle.n_executed == 0);
  CHECK(idle.score.accuracy == doctest::Approx(0.6).epsilon(1e-12));
}

TEST_CASE("a corrupt line truncates the transcript from that point on") {
  const fs::path dir = fresh_dir("corrupt");
  const RunConfig config = mc10_cfmad_config(dir);
  run(config);

  std::ifstream in(config.transcript_path());
  std::vector<std::string> lines;
  std::string raw;
  while (std::getline(in, raw)) lines.push_back(raw);
  in.close();
  REQUIRE(lines.size() == 10);
  lines[4] = R"({"oops": )";  // damage line five; six through ten become orphans
  {
    std::ofstream out(config.transcript_path(), std::ios::trunc);
    for (const auto& line : lines) out << line << "\n";
  }

  const RunSummary summary = run(config);
  CHECK(summary.n_resumed == 4);
  CHECK(summary.n_executed == 6);
  const TranscriptFile file = read_transcript(config.transcript_path());
  CHECK(file.lines.size() == 10);
  CHECK(file.warnings.empty());
}

TEST_CASE("backend failures become error records instead of aborting the run") {
  const fs::path dir = fresh_dir("errors");
  const fs::path script = dir / "three_answers.json";
  {
    Json entries = Json::array();
    for (int i = 0; i < 3; ++i) {
      entries.push_back(Json{{"matcher", "sequence_index"},
                             {"key", i},
                             {"response", "The correct answer is Option A."}});
    }
    std::ofstream(script) << entries.dump(2);
  }

  RunConfig config;
  config.dataset.name = "canonical";
  config.dataset.path = (data_dir() / "mc10.jsonl").string();
  config.method = "cot";
  config.mock_script = script.string();
  config.output_dir = dir.string();
  config.max_concurrency = 1;  // keep the script aligned with dataset order

  const RunSummary summary = run(config);
  CHECK(summary.n_questions == 10);
  CHECK(summary.n_executed == 10);
  CHECK(summary.n_errors == 7);
  // option A is gold for the first and third question only
  CHECK(summary.score.accuracy == doctest::Approx(0.2).epsilon(1e-12));
  CHECK_FALSE(summary.overconfidence.has_value());  // no rule for plain cot

  const TranscriptFile file = read_transcript(config.transcript_path());
  REQUIRE(file.lines.size() == 10);
  CHECK(file.lines[0].record.prediction == "A");
  CHECK(file.lines[3].record.prediction == kBackendError);
  CHECK(file.lines[3].record.intermediates.contains("error"));
  CHECK(file.lines[3].record.prompts_used == 0);
}

TEST_CASE("the debate run on claims feeds the stance and judge analyses") {
  const fs::path dir = fresh_dir("claims");
  RunConfig config;
  config.dataset.name = "canonical";
  config.dataset.path = (data_dir() / "bin10.jsonl").string();
  config.method = "cfmad";
  config.mock_script = fixture_script_path("allmethods_binary");
  config.output_dir = dir.string();
  config.max_concurrency = 2;

  const RunSummary summary = run(config);
  CHECK(summary.n_questions == 10);
  CHECK(summary.n_errors == 0);
  // the scripted judge always says True; six of the ten golds are True
  CHECK(summary.score.accuracy == doctest::Approx(0.6).epsilon(1e-12));
  REQUIRE(summary.score.macro_f1.has_value());
  CHECK(*summary.score.macro_f1 == doctest::Approx(0.375).epsilon(1e-12));

  const Json stance = analyze(config.transcript_path(), "stance_change");
  CHECK(stance.at("analysis") == "stance_change");
  CHECK(stance.at("report").at("n_records") == 10);
  CHECK(stance.at("report").at("unchanged_factual") == 10);
  CHECK(stance.at("report").at("unchanged_counterfactual") == 10);
  CHECK(stance.at("report").at("valid") == 0);
  CHECK(stance.at("report").at("invalid") == 0);
  CHECK(stance.at("report").at("indeterminate") == 0);

  const Json judge = analyze(config.transcript_path(), "judge_validity");
  CHECK(judge.at("report").at("n_inconsistent") == 10);
  CHECK(judge.at("report").at("n_valid") == 6);
  CHECK(judge.at("report").at("proportion_valid") == doctest::Approx(0.6).epsilon(1e-12));

  // token accounting agrees between the analysis and the replay paths
  const Json tokens = analyze(config.transcript_path(), "tokens");
  const Json replayed = replay(config.transcript_path());
  CHECK(tokens.at("report") == replayed.at("tokens"));
  CHECK(replayed.at("score").at("accuracy") == doctest::Approx(0.6).epsilon(1e-12));

  CHECK_THROWS_AS(analyze(config.transcript_path(), "sentiment"), ConfigError);
}

TEST_CASE("an overconfident consistency run is flagged in the summary and analysis") {
  const Fixture fx = load_fixture("sc_overconfident");
  const Question q = question_from_json(fx.expected.at("question"));
  const fs::path dir = fresh_dir("overconfident");
  const fs::path dataset = dir / "one_question.jsonl";
  write_canonical({q}, dataset);

  RunConfig config;
  config.dataset.name = "canonical";
  config.dataset.path = dataset.string();
  config.method = "self_consistency";
  config.mock_script = fixture_script_path("sc_overconfident");
  config.output_dir = dir.string();
  config.max_concurrency = 1;

  const RunSummary summary = run(config);
  CHECK(summary.n_questions == 1);
  CHECK(summary.score.accuracy == doctest::Approx(0.0));
  REQUIRE(summary.overconfidence.has_value());
  CHECK(summary.overconfidence->n_incorrect == 1);
  CHECK(summary.overconfidence->n_overconfident == 1);
  CHECK(summary.overconfidence->proportion == doctest::Approx(1.0));

  const Json analysis = analyze(config.transcript_path(), "overconfidence");
  CHECK(analysis.at("report").at("n_overconfident") == 1);

  // consistency records carry no stance intermediates
  CHECK_THROWS_AS(analyze(config.transcript_path(), "stance_change"), MissingIntermediates);
}

TEST_CASE("open-ended questions run through enumeration inside the runner") {
  const Fixture fx = load_fixture("open_ended_enum");
  const Question q = question_from_json(fx.expected.at("question"));
  REQUIRE(q.task_kind == TaskKind::open_ended);
  const fs::path dir = fresh_dir("openended");
  const fs::path dataset = dir / "one_question.jsonl";
  write_canonical({q}, dataset);

  RunConfig config;
  config.dataset.name = "canonical";
  config.dataset.path = dataset.string();
  config.method = "cfmad";
  config.mock_script = fixture_script_path("open_ended_enum");
  config.output_dir = dir.string();
  config.max_concurrency = 1;

  const RunSummary summary = run(config);
  CHECK(summary.n_questions == 1);
  CHECK(summary.n_errors == 0);
  CHECK(summary.score.accuracy == doctest::Approx(1.0));

  const TranscriptFile file = read_transcript(config.transcript_path());
  REQUIRE(file.lines.size() == 1);
  const RunRecord& record = file.lines[0].record;
  CHECK(record.prediction == "B");
  CHECK(record.gold == "B");  // relabeled by the enumeration
  CHECK(record.prompts_used == 15);
  CHECK(record.intermediates.at("gold_in_candidates") == true);
}

TEST_CASE("transcript reading tolerates damaged lines with a warning") {
  const fs::path dir = fresh_dir("tolerant");
  const fs::path good_run = dir / "source";
  fs::create_directories(good_run);
  RunConfig config = mc10_cfmad_config(good_run);
  run(config);

  std::ifstream in(config.transcript_path());
  std::vector<std::string> lines;
  std::string raw;
  while (std::getline(in, raw)) lines.push_back(raw);
  in.close();

  const fs::path damaged = dir / "damaged.jsonl";
  {
    std::ofstream out(damaged);
    out << lines[0] << "\n";
    out << "{ broken json\n";
    out << lines[1] << "\n";
  }
  const TranscriptFile file = read_transcript(damaged);
  CHECK(file.lines.size() == 2);
  REQUIRE(file.warnings.size() == 1);
  CHECK(file.warnings[0].find("line 2") != std::string::npos);

  CHECK_THROWS_AS(read_transcript(dir / "absent.jsonl"), IoError);
}

TEST_CASE("sweeping the debate length reprices each configuration") {
  const fs::path dir = fresh_dir("sweep");
  RunConfig config = mc10_cfmad_config(dir);

  const std::vector<SweepRow> rows = sweep(config, "debate_rounds", {1, 2});
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].axis == "debate_rounds");
  CHECK(rows[0].value == 1);
  CHECK(rows[0].prompts_per_sample == doctest::Approx(10.0));  // 3 + 2(1+2) + 1
  CHECK(rows[1].value == 2);
  CHECK(rows[1].prompts_per_sample == doctest::Approx(14.0));  // 3 + 2(1+4) + 1
  CHECK(rows[0].accuracy == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(rows[1].accuracy == doctest::Approx(0.6).epsilon(1e-12));
  CHECK_FALSE(rows[0].macro_f1.has_value());

  const Json j = to_json(rows);
  CHECK(j[0].at("value") == 1);
  CHECK(j[1].at("prompts_per_sample") == doctest::Approx(14.0));

  RunConfig baseline_config = config;
  baseline_config.method = "cot";
  CHECK_THROWS_AS(sweep(baseline_config, "debate_rounds", {1}), ConfigError);
  CHECK_THROWS_AS(sweep(config, "temperature", {1}), ConfigError);
  CHECK_THROWS_AS(sweep(config, "debate_rounds", {}), ConfigError);
}

TEST_CASE("a missing template is reported before any question runs") {
  const fs::path dir = fresh_dir("templates");
  const fs::path empty_templates = dir / "templates";
  fs::create_directories(empty_templates);

  RunConfig config;
  config.dataset.name = "canonical";
  config.dataset.path = (data_dir() / "mc10.jsonl").string();
  config.method = "cot";
  config.mock_script = fixture_script_path("allmethods_multichoice");
  config.output_dir = dir.string();
  config.templates_dir = empty_templates.string();

  CHECK_THROWS_WITH_AS(run(config), doctest::Contains("missing template"), ConfigError);
  CHECK_FALSE(fs::exists(config.transcript_path()));
}
