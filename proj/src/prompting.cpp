#include "cfmad/prompting.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace cfmad {
namespace {

bool is_ident_start(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}
bool is_ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

/// Returns the placeholder name if body[pos] opens one, else nullopt.
std::optional<std::string> placeholder_at(const std::string& body, std::size_t pos,
                                          std::size_t* end) {
  if (body[pos] != '{') return std::nullopt;
  std::size_t i = pos + 1;
  if (i >= body.size() || !is_ident_start(body[i])) return std::nullopt;
  std::size_t start = i;
  while (i < body.size() && is_ident_char(body[i])) ++i;
  if (i >= body.size() || body[i] != '}') return std::nullopt;
  *end = i + 1;
  return body.substr(start, i - start);
}

}  // namespace

std::vector<std::string> extract_placeholders(const std::string& body) {
  std::vector<std::string> names;
  std::size_t i = 0;
  while (i < body.size()) {
    std::size_t end = 0;
    if (auto name = placeholder_at(body, i, &end)) {
      if (std::find(names.begin(), names.end(), *name) == names.end()) {
        names.push_back(*name);
      }
      i = end;
    } else {
      ++i;
    }
  }
  return names;
}

std::string render_template(const PromptTemplate& tpl, const Bindings& bindings) {
  std::string out;
  out.reserve(tpl.body.size());
  std::size_t i = 0;
  while (i < tpl.body.size()) {
    std::size_t end = 0;
    if (auto name = placeholder_at(tpl.body, i, &end)) {
      auto it = bindings.find(*name);
      if (it == bindings.end()) throw MissingBinding(tpl.id, *name);
      out += it->second;
      i = end;
    } else {
      out += tpl.body[i];
      ++i;
    }
  }
  return out;
}

TemplateRegistry TemplateRegistry::load_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw IoError("templates directory not found: " + dir.string());
  }
  TemplateRegistry reg;
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".txt") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  for (const auto& path : files) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read template file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    std::string body = buf.str();
    // editors append a final newline; prompts should not carry it
    while (!body.empty() && (body.back() == '\n' || body.back() == '\r')) body.pop_back();
    PromptTemplate tpl;
    tpl.id = path.stem().string();
    tpl.body = std::move(body);
    tpl.placeholders = extract_placeholders(tpl.body);
    reg.add(std::move(tpl));
  }
  return reg;
}

void TemplateRegistry::add(PromptTemplate tpl) {
  templates_[tpl.id] = std::move(tpl);
}

bool TemplateRegistry::contains(const std::string& id) const {
  return templates_.count(id) > 0;
}

const PromptTemplate& TemplateRegistry::get(const std::string& id) const {
  auto it = templates_.find(id);
  if (it == templates_.end()) throw UnknownTemplate(id);
  return it->second;
}

std::string TemplateRegistry::render(const std::string& id, const Bindings& bindings) const {
  return render_template(get(id), bindings);
}

std::vector<std::string> TemplateRegistry::ids() const {
  std::vector<std::string> out;
  out.reserve(templates_.size());
  for (const auto& [id, tpl] : templates_) out.push_back(id);
  return out;
}

std::filesystem::path resolve_templates_dir(const std::string& explicit_path) {
  if (!explicit_path.empty()) return explicit_path;
  if (const char* env = std::getenv("CFMAD_TEMPLATES_DIR")) {
    if (*env != '\0') return env;
  }
  if (std::filesystem::is_directory("templates")) return "templates";
#ifdef CFMAD_SOURCE_DIR
  const auto source = std::filesystem::path(CFMAD_SOURCE_DIR) / "templates";
  if (std::filesystem::is_directory(source)) return source;
#endif
  throw ConfigError("cannot locate templates directory; pass --templates or set CFMAD_TEMPLATES_DIR");
}

ParseRule rule_for_task(TaskKind kind) {
  switch (kind) {
    case TaskKind::fact_check:
    case TaskKind::boolean_qa:
      return {"true_false", ParseTarget::true_false};
    case TaskKind::multi_choice:
      return {"option_letter", ParseTarget::option_letter};
    case TaskKind::open_ended:
      return {"last_number", ParseTarget::last_number};
  }
  return {"free_text", ParseTarget::free_text};
}

namespace {

bool contains_ci(const std::string& haystack, std::size_t pos, const char* needle) {
  for (std::size_t i = 0; needle[i] != '\0'; ++i) {
    if (pos + i >= haystack.size()) return false;
    if (std::tolower(static_cast<unsigned char>(haystack[pos + i])) != needle[i]) return false;
  }
  return true;
}

std::string parse_option_letter(const std::string& text, const std::vector<std::string>& allowed) {
  std::string found = kUnparsed;
  for (std::size_t i = 0; i + 6 <= text.size(); ++i) {
    if (!contains_ci(text, i, "option")) continue;
    std::size_t j = i + 6;
    while (j < text.size() &&
           (std::isspace(static_cast<unsigned char>(text[j])) || text[j] == '[' ||
            text[j] == '(' || text[j] == '*' || text[j] == ':' || text[j] == '"' ||
            text[j] == '\'')) {
      ++j;
    }
    if (j >= text.size()) continue;
    std::size_t k = j;
    while (k < text.size() && std::isalnum(static_cast<unsigned char>(text[k]))) ++k;
    if (k == j) continue;
    const std::string token = text.substr(j, k - j);
    for (const auto& label : allowed) {
      if (lowercase(label) == lowercase(token)) {
        found = label;  // keep scanning: last occurrence wins
        break;
      }
    }
  }
  return found;
}

std::string parse_true_false(const std::string& text, const std::vector<std::string>& allowed) {
  std::string found = kUnparsed;
  std::size_t i = 0;
  while (i < text.size()) {
    if (!std::isalpha(static_cast<unsigned char>(text[i]))) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && std::isalpha(static_cast<unsigned char>(text[j]))) ++j;
    const std::string word = lowercase(text.substr(i, j - i));
    if (word == "true" || word == "false") {
      const std::string canonical = word == "true" ? kTrueLabel : kFalseLabel;
      for (const auto& label : allowed) {
        if (normalize_label(label) == canonical) {
          found = label;
          break;
        }
      }
    }
    i = j;
  }
  return found;
}

std::string parse_last_number(const std::string& text) {
  std::string found = kUnparsed;
  std::size_t i = 0;
  while (i < text.size()) {
    if (!std::isdigit(static_cast<unsigned char>(text[i]))) {
      ++i;
      continue;
    }
    std::size_t start = i;
    if (start > 0 && (text[start - 1] == '-' || text[start - 1] == '+')) {
      --start;
    }
    std::size_t j = i;
    while (j < text.size() && (std::isdigit(static_cast<unsigned char>(text[j])) ||
                               text[j] == ',')) {
      ++j;
    }
    if (j < text.size() && text[j] == '.' && j + 1 < text.size() &&
        std::isdigit(static_cast<unsigned char>(text[j + 1]))) {
      ++j;
      while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
    }
    if (auto canon = canonical_number(text.substr(start, j - start))) {
      found = *canon;
    }
    i = j;
  }
  return found;
}

}  // namespace

std::string parse_answer(const std::string& text, const ParseRule& rule,
                         const std::vector<std::string>& allowed) {
  switch (rule.target) {
    case ParseTarget::option_letter:
      return parse_option_letter(text, allowed);
    case ParseTarget::true_false:
      return parse_true_false(text, allowed);
    case ParseTarget::last_number:
      return parse_last_number(text);
    case ParseTarget::free_text: {
      const std::string t = trim(text);
      return t.empty() ? kUnparsed : t;
    }
  }
  return kUnparsed;
}

std::optional<std::string> canonical_number(const std::string& token) {
  std::string cleaned;
  cleaned.reserve(token.size());
  for (char c : trim(token)) {
    if (c == ',') continue;
    cleaned += c;
  }
  if (cleaned.empty()) return std::nullopt;
  char* end = nullptr;
  const double value = std::strtod(cleaned.c_str(), &end);
  if (end == cleaned.c_str() || *end != '\0') return std::nullopt;
  const double rounded = std::round(value);
  char buf[64];
  if (std::abs(value - rounded) < 1e-9 && std::abs(value) < 1e15) {
    std::snprintf(buf, sizeof(buf), "%.0f", rounded);
  } else {
    std::snprintf(buf, sizeof(buf), "%.10g", value);
  }
  return std::string(buf);
}

std::string expected_answer_format(TaskKind kind) {
  if (is_binary(kind)) return "The claim is [True/False].";
  if (kind == TaskKind::open_ended) return "The answer is [number].";
  return "The correct answer is Option [X].";
}

std::string format_expected_answer(TaskKind kind, const std::string& label) {
  if (is_binary(kind)) return "The claim is " + normalize_label(label) + ".";
  if (kind == TaskKind::open_ended) return "The answer is " + label + ".";
  return "The correct answer is Option " + label + ".";
}

std::string template_family(TaskKind kind) {
  switch (kind) {
    case TaskKind::fact_check: return "factcheck";
    case TaskKind::boolean_qa: return "boolq";
    case TaskKind::multi_choice: return "commonsense";
    case TaskKind::open_ended: return "openended";
  }
  return "commonsense";
}

std::string question_content(const Question& q) {
  std::string out;
  switch (q.task_kind) {
    case TaskKind::fact_check:
      out = "Evidence: " + q.context + "\nClaim: " + q.query;
      break;
    case TaskKind::boolean_qa:
      out = "Passage: " + q.context + "\nQuestion: " + q.query;
      break;
    case TaskKind::multi_choice: {
      if (!q.context.empty()) out = "Context: " + q.context + "\n";
      out += "Question: " + q.query + "\nOptions:";
      for (const auto& o : q.options) {
        out += "\n" + o.label + ". " + o.text;
      }
      break;
    }
    case TaskKind::open_ended:
      if (!q.context.empty()) out = q.context + "\n";
      out += "Question: " + q.query;
      break;
  }
  return out;
}

Bindings question_bindings(const Question& q) {
  const std::string content = question_content(q);
  Bindings b;
  b["question_content"] = content;
  b["evidence"] = q.context;
  b["claim"] = q.query;
  b["passage"] = q.context;
  b["question"] = q.task_kind == TaskKind::multi_choice ? content : q.query;
  return b;
}

}  // namespace cfmad
