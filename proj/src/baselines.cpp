#include "cfmad/baselines.hpp"

#include <algorithm>
#include <map>

namespace cfmad {
namespace {

/// Plurality winner among parsed labels, earliest sample breaking ties;
/// UNPARSED when nothing parsed.
std::string plurality_label(const std::vector<std::string>& labels) {
  std::map<std::string, int> counts;
  for (const auto& label : labels) {
    if (label != kUnparsed) counts[label] += 1;
  }
  if (counts.empty()) return kUnparsed;
  int best = 0;
  for (const auto& [label, count] : counts) best = std::max(best, count);
  for (const auto& label : labels) {
    if (label != kUnparsed && counts[label] == best) return label;
  }
  return kUnparsed;
}

std::string initial_template_id(const std::string& family, int agent_index) {
  return "mad.initial" + std::to_string(agent_index % 3 + 1) + "." + family;
}

/// "Other agent1: ...\nOther agent2: ..." over everyone except `self`.
std::string peer_block(const std::vector<std::string>& latest, std::size_t self) {
  std::string peers;
  int peer_no = 0;
  for (std::size_t j = 0; j < latest.size(); ++j) {
    if (j == self) continue;
    if (peer_no > 0) peers += "\n";
    peers += "Other agent" + std::to_string(++peer_no) + ": " + latest[j];
  }
  return peers;
}

/// Slices the contrast reply into the reflection template's slots. Fields
/// are located by their leading labels; the text between labels is passed
/// through untouched. A missing label leaves the whole reply in that slot,
/// so a free-form contrast reply still reaches the reflection step intact.
struct ContrastFields {
  std::string difference_1_2;
  std::string difference_1_3;
  std::string difference_2_3;
  std::string checklist;
};

ContrastFields split_contrast_reply(const std::string& reply) {
  const std::vector<std::string> markers = {
      "For Judgement1 and Judgement2", "For Judgement1 and Judgement3",
      "For Judgement2 and Judgement3", "Checklist"};
  std::vector<std::size_t> starts(markers.size(), std::string::npos);
  for (std::size_t i = 0; i < markers.size(); ++i) starts[i] = reply.find(markers[i]);

  auto slice = [&](std::size_t i) {
    if (starts[i] == std::string::npos) return reply;
    std::size_t begin = starts[i] + markers[i].size();
    while (begin < reply.size() &&
           (reply[begin] == ' ' || reply[begin] == ':' || reply[begin] == '\n')) {
      ++begin;
    }
    std::size_t end = reply.size();
    for (std::size_t j = 0; j < markers.size(); ++j) {
      if (j != i && starts[j] != std::string::npos && starts[j] > starts[i]) {
        end = std::min(end, starts[j]);
      }
    }
    return trim(reply.substr(begin, end - begin));
  };
  return {slice(0), slice(1), slice(2), slice(3)};
}

}  // namespace

const char* to_string(BaselineMethod method) {
  switch (method) {
    case BaselineMethod::cot: return "cot";
    case BaselineMethod::self_reflection: return "self_reflection";
    case BaselineMethod::self_consistency: return "self_consistency";
    case BaselineMethod::mad: return "mad";
    case BaselineMethod::self_contrast: return "self_contrast";
  }
  return "cot";
}

BaselineMethod baseline_method_from_string(const std::string& name) {
  if (name == "cot") return BaselineMethod::cot;
  if (name == "self_reflection") return BaselineMethod::self_reflection;
  if (name == "self_consistency") return BaselineMethod::self_consistency;
  if (name == "mad") return BaselineMethod::mad;
  if (name == "self_contrast") return BaselineMethod::self_contrast;
  throw ConfigError("unknown baseline method '" + name + "'");
}

BaselineConfig BaselineConfig::for_method(BaselineMethod method) {
  BaselineConfig config;
  config.method = method;
  if (method == BaselineMethod::self_consistency) config.temperature = 1.0;
  return config;
}

void validate(const BaselineConfig& config) {
  if (config.n_samples < 1) {
    throw ConfigError("n_samples must be at least 1, got " + std::to_string(config.n_samples));
  }
  if (config.n_agents < 2) {
    throw ConfigError("n_agents must be at least 2, got " + std::to_string(config.n_agents));
  }
  if (config.n_rounds < 1) {
    throw ConfigError("n_rounds must be at least 1, got " + std::to_string(config.n_rounds));
  }
  if (config.temperature < 0.0 || config.temperature > 2.0) {
    throw ConfigError("temperature must lie in [0, 2], got " +
                      std::to_string(config.temperature));
  }
}

std::vector<std::string> extract_perspectives(const std::string& curate_reply) {
  std::vector<std::string> blocks;
  std::size_t pos = 0;
  while (blocks.size() < 3) {
    const std::size_t begin = curate_reply.find("###", pos);
    if (begin == std::string::npos) break;
    const std::size_t end = curate_reply.find("@@@", begin + 3);
    if (end == std::string::npos) break;
    blocks.push_back(trim(curate_reply.substr(begin + 3, end - begin - 3)));
    pos = end + 3;
  }
  if (blocks.size() < 3) {
    throw PerspectiveExtractionFailed("expected three ###...@@@ perspective blocks, found " +
                                      std::to_string(blocks.size()));
  }
  return blocks;
}

RunRecord run_cot(const Question& q, const BaselineConfig& config, ChatBackend& backend,
                  const TemplateRegistry& templates, std::vector<ChatExchange>& log) {
  validate(config);
  CallSession session{backend, log, config.seed, config.temperature,
                      static_cast<int>(log.size())};
  const ChatExchange ex = session.call(
      templates.render("cot." + template_family(q.task_kind), question_bindings(q)), "cot");
  const std::string label =
      parse_answer(ex.response_text, rule_for_task(q.task_kind), q.option_labels());

  RunRecord record = make_run_record(q, "cot", label, log);
  record.intermediates = Json{{"parsed", label}};
  return record;
}

RunRecord run_self_reflection(const Question& q, const BaselineConfig& config,
                              ChatBackend& backend, const TemplateRegistry& templates,
                              std::vector<ChatExchange>& log) {
  validate(config);
  const std::string family = template_family(q.task_kind);
  const ParseRule rule = rule_for_task(q.task_kind);
  const auto labels = q.option_labels();
  CallSession session{backend, log, config.seed, config.temperature,
                      static_cast<int>(log.size())};

  const ChatExchange r0 =
      session.call(templates.render("cot." + family, question_bindings(q)), "initial");

  Bindings reflect_b = question_bindings(q);
  reflect_b["cot_reply"] = r0.response_text;
  const ChatExchange feedback =
      session.call(templates.render("reflection.reflect", reflect_b), "reflect");

  Bindings revise_b = question_bindings(q);
  revise_b["cot_reply"] = r0.response_text;
  revise_b["reflection_reply"] = feedback.response_text;
  const ChatExchange r1 =
      session.call(templates.render("reflection.revise." + family, revise_b), "revise");

  const std::string r0_label = parse_answer(r0.response_text, rule, labels);
  const std::string r1_label = parse_answer(r1.response_text, rule, labels);
  RunRecord record = make_run_record(q, "self_reflection", r1_label, log);
  record.intermediates = Json{{"r0_label", r0_label}, {"r1_label", r1_label}};
  return record;
}

RunRecord run_self_consistency(const Question& q, const BaselineConfig& config,
                               ChatBackend& backend, const TemplateRegistry& templates,
                               std::vector<ChatExchange>& log) {
  validate(config);
  const ParseRule rule = rule_for_task(q.task_kind);
  const auto allowed = q.option_labels();
  CallSession session{backend, log, config.seed, config.temperature,
                      static_cast<int>(log.size())};
  const std::string prompt =
      templates.render("cot." + template_family(q.task_kind), question_bindings(q));

  std::vector<std::string> sample_labels;
  for (int i = 0; i < config.n_samples; ++i) {
    const ChatExchange ex = session.call(prompt, "sample_" + std::to_string(i));
    sample_labels.push_back(parse_answer(ex.response_text, rule, allowed));
  }
  const std::string winner = plurality_label(sample_labels);
  if (winner == kUnparsed) {
    throw AllSamplesUnparsed("all " + std::to_string(config.n_samples) +
                             " samples were unparseable for question " + q.id);
  }

  RunRecord record = make_run_record(q, "self_consistency", winner, log);
  record.intermediates = Json{{"sample_labels", sample_labels}};
  return record;
}

RunRecord run_mad(const Question& q, const BaselineConfig& config, ChatBackend& backend,
                  const TemplateRegistry& templates, std::vector<ChatExchange>& log) {
  validate(config);
  const std::string family = template_family(q.task_kind);
  const ParseRule rule = rule_for_task(q.task_kind);
  const auto allowed = q.option_labels();
  CallSession session{backend, log, config.seed, config.temperature,
                      static_cast<int>(log.size())};

  std::vector<std::string> latest;
  std::vector<std::string> initial_labels;
  for (int i = 0; i < config.n_agents; ++i) {
    const ChatExchange ex =
        session.call(templates.render(initial_template_id(family, i), question_bindings(q)),
                     "mad_init_" + std::to_string(i + 1));
    latest.push_back(ex.response_text);
    initial_labels.push_back(parse_answer(ex.response_text, rule, allowed));
  }

  for (int round = 2; round <= config.n_rounds; ++round) {
    std::vector<std::string> next = latest;
    for (std::size_t i = 0; i < latest.size(); ++i) {
      Bindings b = question_bindings(q);
      b["own_response"] = latest[i];
      b["peer_responses"] = peer_block(latest, i);
      const ChatExchange ex = session.call(
          templates.render("mad.debate." + family, b),
          "mad_update_" + std::to_string(i + 1) + "_r" + std::to_string(round));
      next[i] = ex.response_text;
    }
    latest = std::move(next);
  }

  std::string agent_responses;
  std::vector<std::string> final_labels;
  for (std::size_t i = 0; i < latest.size(); ++i) {
    if (i > 0) agent_responses += "\n";
    agent_responses += "Agent" + std::to_string(i + 1) + ": " + latest[i];
    final_labels.push_back(parse_answer(latest[i], rule, allowed));
  }
  Bindings judge_b = question_bindings(q);
  judge_b["agent_responses"] = agent_responses;
  const ChatExchange judge_ex =
      session.call(templates.render("mad.judge." + family, judge_b), "mad_judge");
  const std::string judge_label = parse_answer(judge_ex.response_text, rule, allowed);

  RunRecord record = make_run_record(q, "mad", judge_label, log);
  record.intermediates = Json{{"initial_labels", initial_labels},
                              {"final_labels", final_labels},
                              {"judge_label", judge_label},
                              {"programmatic_majority", plurality_label(final_labels)}};
  return record;
}

RunRecord run_self_contrast(const Question& q, const BaselineConfig& config,
                            ChatBackend& backend, const TemplateRegistry& templates,
                            std::vector<ChatExchange>& log) {
  validate(config);
  const std::string family = template_family(q.task_kind);
  const ParseRule rule = rule_for_task(q.task_kind);
  const auto allowed = q.option_labels();
  CallSession session{backend, log, config.seed, config.temperature,
                      static_cast<int>(log.size())};

  const ChatExchange curate = session.call(
      templates.render("selfcontrast.curate." + family, question_bindings(q)), "curate");
  bool fallback_perspectives = false;
  std::vector<std::string> perspectives;
  try {
    perspectives = extract_perspectives(curate.response_text);
  } catch (const PerspectiveExtractionFailed&) {
    // Degrade to the three fixed multi-agent initial prompts so the run
    // still yields three contrasting answers.
    fallback_perspectives = true;
  }

  std::vector<std::string> replies;
  std::vector<std::string> initial_labels;
  for (int i = 0; i < 3; ++i) {
    const std::string prompt =
        fallback_perspectives
            ? templates.render(initial_template_id(family, i), question_bindings(q))
            : question_content(q) + "\n" + perspectives[static_cast<std::size_t>(i)];
    const ChatExchange ex = session.call(prompt, "perspective_" + std::to_string(i + 1));
    replies.push_back(ex.response_text);
    initial_labels.push_back(parse_answer(ex.response_text, rule, allowed));
  }

  Bindings contrast_b = question_bindings(q);
  contrast_b["reply1"] = replies[0];
  contrast_b["reply2"] = replies[1];
  contrast_b["reply3"] = replies[2];
  const ChatExchange contrast =
      session.call(templates.render("selfcontrast.contrast." + family, contrast_b), "contrast");

  const ContrastFields fields = split_contrast_reply(contrast.response_text);
  Bindings reflect_b = contrast_b;
  reflect_b["difference_1_2"] = fields.difference_1_2;
  reflect_b["difference_1_3"] = fields.difference_1_3;
  reflect_b["difference_2_3"] = fields.difference_2_3;
  reflect_b["checklist"] = fields.checklist;
  const ChatExchange reflect =
      session.call(templates.render("selfcontrast.reflect." + family, reflect_b), "reflect");
  const std::string final_label = parse_answer(reflect.response_text, rule, allowed);

  RunRecord record = make_run_record(q, "self_contrast", final_label, log);
  record.intermediates = Json{{"initial_labels", initial_labels},
                              {"fallback_perspectives", fallback_perspectives}};
  return record;
}

RunRecord run_baseline(const Question& q, const BaselineConfig& config, ChatBackend& backend,
                       const TemplateRegistry& templates, std::vector<ChatExchange>& log) {
  switch (config.method) {
    case BaselineMethod::cot: return run_cot(q, config, backend, templates, log);
    case BaselineMethod::self_reflection:
      return run_self_reflection(q, config, backend, templates, log);
    case BaselineMethod::self_consistency:
      return run_self_consistency(q, config, backend, templates, log);
    case BaselineMethod::mad: return run_mad(q, config, backend, templates, log);
    case BaselineMethod::self_contrast:
      return run_self_contrast(q, config, backend, templates, log);
  }
  throw ConfigError("unknown baseline method");
}

}  // namespace cfmad
