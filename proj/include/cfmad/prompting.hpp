#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cfmad/core.hpp"

namespace cfmad {

class UnknownTemplate : public Error {
 public:
  explicit UnknownTemplate(const std::string& id)
      : Error("unknown template '" + id + "'"), id_(id) {}
  const std::string& id() const { return id_; }

 private:
  std::string id_;
};

class MissingBinding : public Error {
 public:
  MissingBinding(const std::string& template_id, const std::string& name)
      : Error("template '" + template_id + "': no binding for placeholder '" + name + "'"),
        name_(name) {}
  const std::string& name() const { return name_; }

 private:
  std::string name_;
};

struct PromptTemplate {
  std::string id;
  std::string body;
  std::vector<std::string> placeholders;  // in order of first occurrence
};

/// Extracts {identifier} placeholders. Lone braces (JSON-ish literal text in
/// some templates) are not placeholders.
std::vector<std::string> extract_placeholders(const std::string& body);

using Bindings = std::map<std::string, std::string>;

/// Single-pass verbatim substitution; placeholder text inside a bound value
/// is not re-expanded. Extra bindings are ignored.
std::string render_template(const PromptTemplate& tpl, const Bindings& bindings);

/// Loads one template per <id>.txt file in a directory.
class TemplateRegistry {
 public:
  TemplateRegistry() = default;
  static TemplateRegistry load_dir(const std::filesystem::path& dir);

  void add(PromptTemplate tpl);
  bool contains(const std::string& id) const;
  const PromptTemplate& get(const std::string& id) const;
  std::string render(const std::string& id, const Bindings& bindings) const;
  std::vector<std::string> ids() const;

 private:
  std::map<std::string, PromptTemplate> templates_;
};

/// Locates the templates directory: explicit path, then $CFMAD_TEMPLATES_DIR,
/// then ./templates, then the source-tree copy compiled into test builds.
std::filesystem::path resolve_templates_dir(const std::string& explicit_path = "");

enum class ParseTarget { option_letter, true_false, last_number, free_text };

struct ParseRule {
  std::string id;
  ParseTarget target = ParseTarget::free_text;
};

ParseRule rule_for_task(TaskKind kind);

/// Total answer extraction; UNPARSED signals failure. Last occurrence wins
/// for every target. option_letter and true_false only ever return members
/// of `allowed`.
std::string parse_answer(const std::string& text, const ParseRule& rule,
                         const std::vector<std::string>& allowed);

/// Canonical form of a decimal numeral ("012" -> "12", "3.50" -> "3.5",
/// "1,234" -> "1234"); nullopt when the token is not a number.
std::optional<std::string> canonical_number(const std::string& token);

/// The answer sentence shape each task's judge/CoT templates request, with
/// [X] standing for the label slot.
std::string expected_answer_format(TaskKind kind);
/// That sentence with a concrete label substituted.
std::string format_expected_answer(TaskKind kind, const std::string& label);

/// Template family name used in template ids for a task
/// (fact_check -> "factcheck", boolean_qa -> "boolq", otherwise
/// "commonsense"; open-ended sampling uses "openended").
std::string template_family(TaskKind kind);

/// Renders the question block interpolated into prompts: evidence/claim for
/// fact checking, passage/question for boolean QA, context + question +
/// lettered options otherwise.
std::string question_content(const Question& q);

/// Standard bindings every template draws from: question_content, evidence,
/// claim, passage, question.
Bindings question_bindings(const Question& q);

}  // namespace cfmad
