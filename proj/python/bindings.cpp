// Python bindings for the orchestration core. Structured values cross the
// boundary as plain dicts/lists mirroring the JSON shapes the CLI and the
// transcript files use, so results are directly comparable across the three
// frontends.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cfmad/datasets.hpp"
#include "cfmad/metrics.hpp"
#include "cfmad/prompting.hpp"
#include "cfmad/runner.hpp"

namespace py = pybind11;
using namespace cfmad;

namespace {

py::object json_to_py(const Json& j) {
  if (j.is_null()) return py::none();
  if (j.is_boolean()) return py::bool_(j.get<bool>());
  if (j.is_number_unsigned()) return py::int_(j.get<std::uint64_t>());
  if (j.is_number_integer()) return py::int_(j.get<std::int64_t>());
  if (j.is_number_float()) return py::float_(j.get<double>());
  if (j.is_string()) return py::str(j.get<std::string>());
  if (j.is_array()) {
    py::list out;
    for (const Json& element : j) out.append(json_to_py(element));
    return out;
  }
  py::dict out;
  for (const auto& [key, value] : j.items()) out[py::str(key)] = json_to_py(value);
  return out;
}

Json py_to_json(py::handle h) {
  if (h.is_none()) return nullptr;
  if (py::isinstance<py::bool_>(h)) return h.cast<bool>();
  if (py::isinstance<py::int_>(h)) return h.cast<std::int64_t>();
  if (py::isinstance<py::float_>(h)) return h.cast<double>();
  if (py::isinstance<py::str>(h)) return h.cast<std::string>();
  if (py::isinstance<py::list>(h) || py::isinstance<py::tuple>(h)) {
    Json out = Json::array();
    for (py::handle element : h) out.push_back(py_to_json(element));
    return out;
  }
  if (py::isinstance<py::dict>(h)) {
    Json out = Json::object();
    for (const auto& item : h.cast<py::dict>()) {
      out[item.first.cast<std::string>()] = py_to_json(item.second);
    }
    return out;
  }
  throw ConfigError("cannot convert a " +
                    std::string(py::str(h.get_type().attr("__name__"))) + " to JSON");
}

std::vector<RunRecord> records_from_py(const py::list& records) {
  std::vector<RunRecord> out;
  for (py::handle record : records) out.push_back(run_record_from_json(py_to_json(record)));
  return out;
}

ParseRule rule_from_name(const std::string& name) {
  ParseRule rule{name, ParseTarget::free_text};
  if (name == "option_letter") rule.target = ParseTarget::option_letter;
  if (name == "true_false") rule.target = ParseTarget::true_false;
  if (name == "last_number") rule.target = ParseTarget::last_number;
  return rule;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Counterfactual multi-agent debate orchestration core";
  m.attr("__version__") = "0.1.0";
  m.attr("UNPARSED") = kUnparsed;
  m.attr("BACKEND_ERROR") = kBackendError;
  m.attr("TRUE_LABEL") = kTrueLabel;
  m.attr("FALSE_LABEL") = kFalseLabel;

  py::register_exception<Error>(m, "Error");

  m.def(
      "run",
      [](const py::dict& config) {
        const RunConfig parsed = run_config_from_json(py_to_json(config));
        RunSummary summary;
        {
          py::gil_scoped_release release;
          summary = run(parsed);
        }
        return json_to_py(to_json(summary));
      },
      py::arg("config"),
      "Execute a configured run (dict mirroring the JSON config schema); "
      "returns the summary dict and writes the transcript to disk.");

  m.def(
      "sweep",
      [](const py::dict& config, const std::string& axis, const std::vector<int>& values) {
        const RunConfig parsed = run_config_from_json(py_to_json(config));
        std::vector<SweepRow> rows;
        {
          py::gil_scoped_release release;
          rows = sweep(parsed, axis, values);
        }
        return json_to_py(to_json(rows));
      },
      py::arg("config"), py::arg("axis"), py::arg("values"),
      "One run per value along stance_count or debate_rounds.");

  m.def(
      "analyze",
      [](const std::string& transcript, const std::string& analysis) {
        return json_to_py(analyze(transcript, analysis));
      },
      py::arg("transcript"), py::arg("analysis"),
      "Replay a transcript through one of the diagnostics: overconfidence, "
      "stance_change, judge_validity or tokens.");

  m.def(
      "replay", [](const std::string& transcript) { return json_to_py(replay(transcript)); },
      py::arg("transcript"), "Re-score a transcript from its records alone.");

  m.def(
      "normalize_config",
      [](const py::dict& config) {
        return json_to_py(to_json(run_config_from_json(py_to_json(config))));
      },
      py::arg("config"), "Parse, validate and echo a config with defaults filled in.");

  m.def(
      "load_dataset",
      [](const std::string& name, const std::string& path, const std::string& split,
         py::object hop_filter, py::object sample_n, std::uint64_t sample_seed) {
        DatasetSpec spec;
        spec.name = name;
        spec.path = path;
        spec.split = split;
        if (!hop_filter.is_none()) spec.hop_filter = hop_filter.cast<int>();
        if (!sample_n.is_none()) spec.sample_n = sample_n.cast<int>();
        spec.sample_seed = sample_seed;
        py::list out;
        for (const Question& q : load(spec)) out.append(json_to_py(to_json(q)));
        return out;
      },
      py::arg("name"), py::arg("path"), py::arg("split") = "validation",
      py::arg("hop_filter") = py::none(), py::arg("sample_n") = py::none(),
      py::arg("sample_seed") = 0,
      "Load a dataset into the canonical question shape.");

  m.def(
      "score_records",
      [](const py::list& records, const std::string& task_kind, const std::string& method,
         const std::string& dataset) {
        return json_to_py(to_json(score_records(records_from_py(records),
                                                task_kind_from_string(task_kind), method,
                                                dataset)));
      },
      py::arg("records"), py::arg("task_kind"), py::arg("method") = "",
      py::arg("dataset") = "", "Accuracy (and macro-F1 on binary tasks) over run records.");

  m.def(
      "token_report",
      [](const py::list& records) {
        return json_to_py(to_json(token_report(records_from_py(records))));
      },
      py::arg("records"), "Per-method prompt and token averages.");

  m.def(
      "classify_overconfident",
      [](const std::string& method, const py::list& records) {
        return json_to_py(to_json(classify_overconfident(method, records_from_py(records))));
      },
      py::arg("method"), py::arg("records"),
      "Count incorrect records whose intermediates show the method converging "
      "on its own wrong answer.");

  m.def(
      "macro_f1",
      [](const std::vector<std::pair<std::string, std::string>>& pairs) {
        return json_to_py(to_json(macro_f1(pairs)));
      },
      py::arg("pairs"), "Two-class macro-F1 over (gold, predicted) pairs.");

  m.def(
      "accuracy",
      [](const std::vector<std::pair<std::string, std::string>>& pairs) {
        return accuracy(pairs);
      },
      py::arg("pairs"), "Fraction of (gold, predicted) pairs that match.");

  m.def(
      "parse_answer",
      [](const std::string& text, const std::string& rule,
         const std::vector<std::string>& allowed) {
        return parse_answer(text, rule_from_name(rule), allowed);
      },
      py::arg("text"), py::arg("rule"), py::arg("allowed") = std::vector<std::string>{},
      "Extract the last stated answer; rule is option_letter, true_false, "
      "last_number or free_text. Returns UNPARSED on failure.");

  m.def("normalize_label", &normalize_label, py::arg("label"));
  m.def("labels_equal", &labels_equal, py::arg("a"), py::arg("b"));

  m.def(
      "expected_answer_format",
      [](const std::string& task_kind) {
        return expected_answer_format(task_kind_from_string(task_kind));
      },
      py::arg("task_kind"));
  m.def(
      "format_expected_answer",
      [](const std::string& task_kind, const std::string& label) {
        return format_expected_answer(task_kind_from_string(task_kind), label);
      },
      py::arg("task_kind"), py::arg("label"));
}
