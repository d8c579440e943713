#include "cfmad/runner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "cfmad/candidates.hpp"
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

void expect_keys(const Json& j, const std::string& where,
                 std::initializer_list<const char*> allowed) {
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(),
                     [&](const char* k) { return key == k; })) {
      throw ConfigError(where + ": unknown key '" + key + "'");
    }
  }
}

template <class T>
void maybe(const Json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

template <class T>
void maybe_optional(const Json& j, const char* key, std::optional<T>& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

std::string derived_run_name(const RunConfig& config) {
  std::string name = config.dataset.name;
  if (config.dataset.hop_filter) {
    name += "-" + std::to_string(*config.dataset.hop_filter) + "hop";
  }
  name += "-" + config.method;
  if (config.method == "cfmad") {
    name += std::string("-") + to_string(config.cfmad.variant) + "-M" +
            std::to_string(config.cfmad.stance_count) + "-R" +
            std::to_string(config.cfmad.debate_rounds);
  }
  return name + "-seed" + std::to_string(config.seed);
}

/// Template ids the configured method will render for the given questions;
/// probed before the run so a missing file fails fast instead of erroring
/// every question.
std::vector<std::string> required_template_ids(const RunConfig& config,
                                               const std::vector<Question>& questions) {
  std::set<std::string> families;
  bool any_open_ended = false;
  for (const auto& q : questions) {
    families.insert(template_family(q.task_kind));
    if (q.task_kind == TaskKind::open_ended) any_open_ended = true;
  }
  if (config.method == "cfmad" && any_open_ended) {
    // Enumeration turns open-ended items into multi-choice ones.
    families.insert("commonsense");
  }

  std::set<std::string> ids;
  for (const auto& family : families) {
    if (config.method == "cfmad") {
      if (family == "openended") {
        ids.insert("cot.openended");
        continue;
      }
      for (const char* stage : {"abduction", "critic", "agent", "judge"}) {
        ids.insert(std::string("cfmad.") + stage + "." + family);
      }
      if (family == "commonsense") ids.insert("cot.commonsense");
      if (config.cfmad.variant == CfmadVariant::replace_self_reflection) {
        ids.insert("reflection.reflect");
      }
      if (config.cfmad.variant == CfmadVariant::replace_mad) {
        ids.insert("mad.debate." + family);
      }
      continue;
    }
    ids.insert("cot." + family);
    if (config.method == "self_reflection") {
      ids.insert("reflection.reflect");
      ids.insert("reflection.revise." + family);
    } else if (config.method == "mad" || config.method == "self_contrast") {
      for (int i = 1; i <= 3; ++i) {
        ids.insert("mad.initial" + std::to_string(i) + "." + family);
      }
      if (config.method == "mad") {
        ids.insert("mad.debate." + family);
        ids.insert("mad.judge." + family);
      } else {
        for (const char* stage : {"curate", "contrast", "reflect"}) {
          ids.insert(std::string("selfcontrast.") + stage + "." + family);
        }
      }
    }
  }
  return {ids.begin(), ids.end()};
}

bool record_errored(const RunRecord& record) {
  return record.intermediates.is_object() && record.intermediates.contains("error");
}

std::vector<RunRecord> records_with_intermediates(const std::vector<RunRecord>& records) {
  std::vector<RunRecord> out;
  for (const auto& r : records) {
    if (!record_errored(r)) out.push_back(r);
  }
  return out;
}

bool method_has_overconfidence_rule(const std::string& method) {
  return method == "self_reflection" || method == "self_consistency" || method == "mad" ||
         method == "self_contrast";
}

}  // namespace

BaselineConfig BaselineOverrides::resolve(BaselineMethod method) const {
  BaselineConfig config = BaselineConfig::for_method(method);
  if (n_samples) config.n_samples = *n_samples;
  if (n_agents) config.n_agents = *n_agents;
  if (n_rounds) config.n_rounds = *n_rounds;
  if (temperature) config.temperature = *temperature;
  return config;
}

std::filesystem::path RunConfig::transcript_path() const {
  const std::string stem = run_name.empty() ? derived_run_name(*this) : run_name;
  return std::filesystem::path(output_dir) / (stem + ".jsonl");
}

void validate(const RunConfig& config) {
  dataset_task_kind(config.dataset.name);  // throws UnknownDataset
  if (config.dataset.path.empty()) throw ConfigError("dataset.path is required");
  if (config.method == "cfmad") {
    validate(config.cfmad);
  } else {
    baseline_method_from_string(config.method);  // throws ConfigError
  }
  if (config.max_concurrency < 1) {
    throw ConfigError("max_concurrency must be at least 1, got " +
                      std::to_string(config.max_concurrency));
  }
  if (config.output_dir.empty()) throw ConfigError("output_dir is required");
}

RunConfig run_config_from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  expect_keys(j, "config",
              {"dataset", "method", "cfmad", "baseline", "backend", "mock_script", "seed",
               "output_dir", "run_name", "max_concurrency", "templates_dir"});
  RunConfig config;
  try {
    if (j.contains("dataset")) {
      const Json& d = j.at("dataset");
      expect_keys(d, "config.dataset",
                  {"name", "path", "split", "hop_filter", "sample_n", "sample_seed"});
      maybe(d, "name", config.dataset.name);
      maybe(d, "path", config.dataset.path);
      maybe(d, "split", config.dataset.split);
      maybe_optional(d, "hop_filter", config.dataset.hop_filter);
      maybe_optional(d, "sample_n", config.dataset.sample_n);
      maybe(d, "sample_seed", config.dataset.sample_seed);
    }
    maybe(j, "method", config.method);
    if (j.contains("cfmad")) {
      const Json& c = j.at("cfmad");
      expect_keys(c, "config.cfmad",
                  {"stance_count", "debate_rounds", "variant", "temperature", "cot_samples"});
      maybe(c, "stance_count", config.cfmad.stance_count);
      maybe(c, "debate_rounds", config.cfmad.debate_rounds);
      if (c.contains("variant")) {
        config.cfmad.variant = cfmad_variant_from_string(c.at("variant").get<std::string>());
      }
      maybe(c, "temperature", config.cfmad.temperature);
      maybe(c, "cot_samples", config.cfmad.cot_samples);
    }
    if (j.contains("baseline")) {
      const Json& b = j.at("baseline");
      expect_keys(b, "config.baseline", {"n_samples", "n_agents", "n_rounds", "temperature"});
      maybe_optional(b, "n_samples", config.baseline.n_samples);
      maybe_optional(b, "n_agents", config.baseline.n_agents);
      maybe_optional(b, "n_rounds", config.baseline.n_rounds);
      maybe_optional(b, "temperature", config.baseline.temperature);
    }
    if (j.contains("backend")) {
      const Json& b = j.at("backend");
      expect_keys(b, "config.backend",
                  {"base_url", "model_name", "api_key_env", "timeout_s", "max_concurrency",
                   "cache_dir", "max_tokens", "retry"});
      maybe(b, "base_url", config.backend.base_url);
      maybe(b, "model_name", config.backend.model_name);
      maybe(b, "api_key_env", config.backend.api_key_env);
      maybe(b, "timeout_s", config.backend.timeout_s);
      maybe(b, "max_concurrency", config.backend.max_concurrency);
      maybe(b, "cache_dir", config.backend.cache_dir);
      maybe_optional(b, "max_tokens", config.backend.max_tokens);
      if (b.contains("retry")) {
        const Json& r = b.at("retry");
        expect_keys(r, "config.backend.retry",
                    {"max_attempts", "initial_delay_ms", "multiplier"});
        maybe(r, "max_attempts", config.backend.retry.max_attempts);
        maybe(r, "initial_delay_ms", config.backend.retry.initial_delay_ms);
        maybe(r, "multiplier", config.backend.retry.multiplier);
      }
    }
    maybe(j, "mock_script", config.mock_script);
    maybe(j, "seed", config.seed);
    maybe(j, "output_dir", config.output_dir);
    maybe(j, "run_name", config.run_name);
    maybe(j, "max_concurrency", config.max_concurrency);
    maybe(j, "templates_dir", config.templates_dir);
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  config.dataset.task_kind = dataset_task_kind(config.dataset.name);
  validate(config);
  return config;
}

Json to_json(const RunConfig& config) {
  Json dataset{{"name", config.dataset.name},
               {"path", config.dataset.path},
               {"split", config.dataset.split},
               {"sample_seed", config.dataset.sample_seed}};
  if (config.dataset.hop_filter) dataset["hop_filter"] = *config.dataset.hop_filter;
  if (config.dataset.sample_n) dataset["sample_n"] = *config.dataset.sample_n;

  Json cfmad{{"stance_count", config.cfmad.stance_count},
             {"debate_rounds", config.cfmad.debate_rounds},
             {"variant", to_string(config.cfmad.variant)},
             {"temperature", config.cfmad.temperature},
             {"cot_samples", config.cfmad.cot_samples}};

  Json baseline = Json::object();
  if (config.baseline.n_samples) baseline["n_samples"] = *config.baseline.n_samples;
  if (config.baseline.n_agents) baseline["n_agents"] = *config.baseline.n_agents;
  if (config.baseline.n_rounds) baseline["n_rounds"] = *config.baseline.n_rounds;
  if (config.baseline.temperature) baseline["temperature"] = *config.baseline.temperature;

  Json backend{{"base_url", config.backend.base_url},
               {"model_name", config.backend.model_name},
               {"api_key_env", config.backend.api_key_env},
               {"timeout_s", config.backend.timeout_s},
               {"max_concurrency", config.backend.max_concurrency},
               {"cache_dir", config.backend.cache_dir},
               {"retry", Json{{"max_attempts", config.backend.retry.max_attempts},
                              {"initial_delay_ms", config.backend.retry.initial_delay_ms},
                              {"multiplier", config.backend.retry.multiplier}}}};
  if (config.backend.max_tokens) backend["max_tokens"] = *config.backend.max_tokens;

  return Json{{"dataset", std::move(dataset)},
              {"method", config.method},
              {"cfmad", std::move(cfmad)},
              {"baseline", std::move(baseline)},
              {"backend", std::move(backend)},
              {"mock_script", config.mock_script},
              {"seed", config.seed},
              {"output_dir", config.output_dir},
              {"run_name", config.run_name},
              {"max_concurrency", config.max_concurrency},
              {"templates_dir", config.templates_dir}};
}

RunConfig load_run_config(const std::filesystem::path& path) {
  Json j;
  try {
    j = Json::parse(read_text(path));
  } catch (const Json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

Json to_json(const TranscriptLine& line) {
  Json exchanges = Json::array();
  for (const auto& ex : line.exchanges) exchanges.push_back(to_json(ex));
  return Json{{"dataset", line.dataset},
              {"method", line.method},
              {"task_kind", to_string(line.task_kind)},
              {"record", to_json(line.record)},
              {"exchanges", std::move(exchanges)}};
}

TranscriptLine transcript_line_from_json(const Json& j) {
  TranscriptLine line;
  line.dataset = j.at("dataset").get<std::string>();
  line.method = j.at("method").get<std::string>();
  line.task_kind = task_kind_from_string(j.at("task_kind").get<std::string>());
  line.record = run_record_from_json(j.at("record"));
  for (const auto& ex : j.at("exchanges")) {
    line.exchanges.push_back(chat_exchange_from_json(ex));
  }
  return line;
}

Json to_json(const RunSummary& summary) {
  Json j{{"transcript", summary.transcript.string()},
         {"n_questions", summary.n_questions},
         {"n_executed", summary.n_executed},
         {"n_resumed", summary.n_resumed},
         {"n_errors", summary.n_errors},
         {"score", to_json(summary.score)},
         {"tokens", to_json(summary.tokens)}};
  if (summary.overconfidence) j["overconfidence"] = to_json(*summary.overconfidence);
  return j;
}

TranscriptLine process_question(const Question& q, const RunConfig& config,
                                ChatBackend& backend, const TemplateRegistry& templates) {
  TranscriptLine line;
  line.dataset = config.dataset.name;
  line.method = config.method;
  line.task_kind = q.task_kind;
  const std::uint64_t question_seed = hash_seed(config.seed, q.id);
  const auto started = std::chrono::steady_clock::now();

  std::vector<ChatExchange> log;
  try {
    if (config.method == "cfmad") {
      CfmadConfig cfmad = config.cfmad;
      cfmad.seed = question_seed;
      if (q.task_kind == TaskKind::open_ended) {
        // Enumeration first turns the item into a multi-choice question. The
        // sampled candidates may legitimately miss the gold answer, so this
        // path skips the dataset-level gold-in-options validation.
        validate(cfmad);
        CandidateConfig candidates;
        candidates.stance_count = cfmad.stance_count;
        candidates.cot_samples = cfmad.cot_samples;
        candidates.cot_temperature = cfmad.temperature;
        candidates.seed = question_seed;
        const OpenEndedEnumeration enumerated =
            enumerate_open_ended(q, backend, templates, candidates, log);
        const StanceSelection selection =
            select_stances(enumerated.question, backend, templates, candidates, log);
        line.record =
            run_variant(enumerated.question, selection, cfmad, backend, templates, log);
        line.record.intermediates["gold_in_candidates"] = enumerated.gold_in_candidates;
      } else {
        line.record = run_cfmad_question(q, cfmad, backend, templates, log);
      }
    } else {
      BaselineConfig baseline =
          config.baseline.resolve(baseline_method_from_string(config.method));
      baseline.seed = question_seed;
      line.record = run_baseline(q, baseline, backend, templates, log);
    }
  } catch (const BackendError& e) {
    line.record = make_run_record(q, config.method, kBackendError, log);
    line.record.intermediates = Json{{"error", e.what()}};
  } catch (const Error& e) {
    line.record = make_run_record(q, config.method, kUnparsed, log);
    line.record.intermediates = Json{{"error", e.what()}};
  } catch (const std::exception& e) {
    line.record = make_run_record(q, config.method, kUnparsed, log);
    line.record.intermediates = Json{{"error", e.what()}};
  }
  line.exchanges = std::move(log);
  line.record.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                            std::chrono::steady_clock::now() - started)
                            .count();
  return line;
}

RunSummary run(const RunConfig& config) {
  validate(config);
  TemplateRegistry templates =
      TemplateRegistry::load_dir(resolve_templates_dir(config.templates_dir));
  if (!config.mock_script.empty()) {
    MockBackend backend(load_script(config.mock_script));
    return run(config, backend, templates);
  }
  if (config.backend.base_url.empty()) {
    throw ConfigError("either mock_script or backend.base_url is required");
  }
  HttpBackend backend(config.backend);
  return run(config, backend, templates);
}

RunSummary run(const RunConfig& config, ChatBackend& backend, const TemplateRegistry& templates) {
  validate(config);
  const std::vector<Question> questions = load(config.dataset);
  for (const auto& id : required_template_ids(config, questions)) {
    if (!templates.contains(id)) {
      throw ConfigError("missing template '" + id + "' in the templates directory");
    }
  }

  const std::filesystem::path path = config.transcript_path();
  std::filesystem::create_directories(path.parent_path());

  // Resume: keep every intact line, truncate the file at the first corrupt
  // or unterminated one. A killed run can only leave a partial tail, so
  // this recovers exactly the completed questions.
  std::map<std::string, RunRecord> done;
  if (std::filesystem::exists(path)) {
    const std::string text = read_text(path);
    std::size_t pos = 0;
    std::size_t keep = 0;
    while (pos < text.size()) {
      const std::size_t nl = text.find('\n', pos);
      if (nl == std::string::npos) break;  // unterminated tail
      const std::string raw = text.substr(pos, nl - pos);
      if (!trim(raw).empty()) {
        try {
          TranscriptLine parsed = transcript_line_from_json(Json::parse(raw));
          done[parsed.record.question_id] = std::move(parsed.record);
        } catch (const std::exception&) {
          break;  // truncate from this line on
        }
      }
      keep = nl + 1;
      pos = nl + 1;
    }
    if (keep < text.size()) std::filesystem::resize_file(path, keep);
  }

  std::vector<Question> todo;
  for (const auto& q : questions) {
    if (!done.count(q.id)) todo.push_back(q);
  }

  // Workers pull the next question; the writer appends results strictly in
  // dataset order, so transcript bytes are independent of thread timing.
  std::vector<std::optional<TranscriptLine>> results(todo.size());
  std::atomic<std::size_t> next_index{0};
  std::mutex mutex;
  std::condition_variable ready;
  auto worker = [&] {
    while (true) {
      const std::size_t i = next_index.fetch_add(1);
      if (i >= todo.size()) break;
      TranscriptLine line = process_question(todo[i], config, backend, templates);
      {
        std::lock_guard<std::mutex> lock(mutex);
        results[i] = std::move(line);
      }
      ready.notify_all();
    }
  };
  std::vector<std::thread> pool;
  const std::size_t n_workers =
      std::min<std::size_t>(static_cast<std::size_t>(config.max_concurrency), todo.size());
  for (std::size_t i = 0; i < n_workers; ++i) pool.emplace_back(worker);

  std::map<std::string, RunRecord> fresh;
  {
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out) throw IoError("cannot append to " + path.string());
    for (std::size_t i = 0; i < todo.size(); ++i) {
      std::unique_lock<std::mutex> lock(mutex);
      ready.wait(lock, [&] { return results[i].has_value(); });
      TranscriptLine line = std::move(*results[i]);
      results[i].reset();
      lock.unlock();
      out << to_json(line).dump(-1, ' ', false, Json::error_handler_t::replace) << "\n";
      out.flush();
      if (!out) throw IoError("write failed for " + path.string());
      fresh[line.record.question_id] = std::move(line.record);
    }
  }
  for (auto& t : pool) t.join();

  RunSummary summary;
  summary.transcript = path;
  summary.n_questions = static_cast<int>(questions.size());
  summary.n_executed = static_cast<int>(todo.size());
  summary.n_resumed = static_cast<int>(questions.size() - todo.size());

  std::vector<RunRecord> records;
  for (const auto& q : questions) {
    const auto it = fresh.count(q.id) ? fresh.find(q.id) : done.find(q.id);
    records.push_back(it->second);
    if (record_errored(it->second)) ++summary.n_errors;
  }
  if (!records.empty()) {
    summary.score =
        score_records(records, questions.front().task_kind, config.method, config.dataset.name);
    summary.tokens = token_report(records);
    if (method_has_overconfidence_rule(config.method)) {
      summary.overconfidence =
          classify_overconfident(config.method, records_with_intermediates(records));
    }
  }

  std::filesystem::path summary_path = path;
  summary_path.replace_extension(".summary.json");
  std::ofstream summary_out(summary_path, std::ios::binary | std::ios::trunc);
  summary_out << to_json(summary).dump(2) << "\n";
  return summary;
}

Json to_json(const std::vector<SweepRow>& rows) {
  Json j = Json::array();
  for (const auto& row : rows) {
    Json r{{"axis", row.axis},
           {"value", row.value},
           {"accuracy", row.accuracy},
           {"prompts_per_sample", row.prompts_per_sample}};
    if (row.macro_f1) r["macro_f1"] = *row.macro_f1;
    j.push_back(std::move(r));
  }
  return j;
}

std::vector<SweepRow> sweep(const RunConfig& config, const std::string& axis,
                            const std::vector<int>& values) {
  if (config.method != "cfmad") throw ConfigError("sweep requires method = cfmad");
  if (axis != "stance_count" && axis != "debate_rounds") {
    throw ConfigError("sweep axis must be stance_count or debate_rounds, got '" + axis + "'");
  }
  if (values.empty()) throw ConfigError("sweep needs at least one value");

  std::vector<SweepRow> rows;
  for (const int value : values) {
    RunConfig point = config;
    point.run_name.clear();  // re-derive so each value gets its own transcript
    if (axis == "stance_count") {
      point.cfmad.stance_count = value;
    } else {
      point.cfmad.debate_rounds = value;
    }
    const RunSummary summary = run(point);
    SweepRow row;
    row.axis = axis;
    row.value = value;
    row.accuracy = summary.score.accuracy;
    row.macro_f1 = summary.score.macro_f1;
    for (const auto& token_row : summary.tokens) {
      if (token_row.method == "cfmad") row.prompts_per_sample = token_row.prompts_per_sample;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

TranscriptFile read_transcript(const std::filesystem::path& path) {
  TranscriptFile file;
  const std::string text = read_text(path);
  std::istringstream lines(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(lines, raw)) {
    ++line_no;
    if (trim(raw).empty()) continue;
    try {
      file.lines.push_back(transcript_line_from_json(Json::parse(raw)));
    } catch (const std::exception& e) {
      file.warnings.push_back("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return file;
}

Json analyze(const std::filesystem::path& transcript_path, const std::string& analysis) {
  const TranscriptFile file = read_transcript(transcript_path);
  std::vector<RunRecord> records;
  for (const auto& line : file.lines) records.push_back(line.record);

  Json out{{"analysis", analysis},
           {"transcript", transcript_path.string()},
           {"n_lines", static_cast<int>(file.lines.size())},
           {"warnings", file.warnings}};
  if (analysis == "tokens") {
    out["report"] = to_json(token_report(records));
  } else if (analysis == "overconfidence") {
    if (file.lines.empty()) throw ConfigError("transcript is empty");
    const std::string method = file.lines.front().method;
    if (!method_has_overconfidence_rule(method)) {
      throw ConfigError("no overconfidence rule for method '" + method + "'");
    }
    out["report"] =
        to_json(classify_overconfident(method, records_with_intermediates(records)));
  } else if (analysis == "stance_change") {
    out["report"] = to_json(classify_stance_change(records_with_intermediates(records)));
  } else if (analysis == "judge_validity") {
    out["report"] = to_json(judge_validity(records_with_intermediates(records)));
  } else {
    throw ConfigError(
        "unknown analysis '" + analysis +
        "' (expected overconfidence, stance_change, judge_validity or tokens)");
  }
  return out;
}

Json replay(const std::filesystem::path& transcript_path) {
  const TranscriptFile file = read_transcript(transcript_path);
  Json out{{"transcript", transcript_path.string()},
           {"n_lines", static_cast<int>(file.lines.size())},
           {"warnings", file.warnings}};
  if (!file.lines.empty()) {
    std::vector<RunRecord> records;
    for (const auto& line : file.lines) records.push_back(line.record);
    out["score"] = to_json(score_records(records, file.lines.front().task_kind,
                                         file.lines.front().method,
                                         file.lines.front().dataset));
    out["tokens"] = to_json(token_report(records));
  }
  return out;
}

}  // namespace cfmad
