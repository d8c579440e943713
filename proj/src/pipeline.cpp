#include "cfmad/pipeline.hpp"

#include <algorithm>

namespace cfmad {
namespace {

/// Bindings shared by all per-stance templates. stance_word / the critic's
/// counter word only matter on binary tasks, where the stance labels are
/// True and False.
Bindings stance_bindings(const Question& q, const CandidateAnswer& stance) {
  Bindings b = question_bindings(q);
  b["stance_label"] = stance.label;
  b["stance_text"] = stance.text;
  b["stance_word"] = lowercase(stance.label);
  b["critic_stance_word"] = labels_equal(stance.label, kTrueLabel) ? "incorrect" : "correct";
  return b;
}

std::vector<StanceDossier> dossiers_from_transcripts(
    const std::vector<DebateTranscript>& transcripts) {
  std::vector<StanceDossier> dossiers;
  for (const auto& t : transcripts) {
    StanceDossier d{t.stance, {{"Assistant", t.abduction.rationale_text}}};
    for (const auto& turn : t.turns) {
      d.turns.emplace_back(turn.role == DebateRole::critic ? "Critic" : "Assistant", turn.text);
    }
    dossiers.push_back(std::move(d));
  }
  return dossiers;
}

/// Single judge call over the presented material, with the re-ask and
/// stance-1 fallback handling.
Judgment judge_over_dossiers(const Question& q, const std::vector<StanceDossier>& dossiers,
                             const TemplateRegistry& templates, CallSession& session) {
  Bindings b = question_bindings(q);
  b["debate_process"] = format_dossiers(q, dossiers);
  const std::string prompt =
      templates.render("cfmad.judge." + template_family(q.task_kind), b);

  std::vector<std::string> allowed;
  for (const auto& d : dossiers) allowed.push_back(d.stance.label);
  const ParseRule rule = rule_for_task(q.task_kind);

  const ChatExchange first = session.call(prompt, "judge");
  std::string label = parse_answer(first.response_text, rule, allowed);
  if (label != kUnparsed) return {label, first.response_text, rule.id};

  const ChatExchange second = session.call(
      prompt + "\nPlease answer strictly in the format: " + expected_answer_format(q.task_kind),
      "judge_reask");
  label = parse_answer(second.response_text, rule, allowed);
  if (label != kUnparsed) return {label, second.response_text, rule.id + "_reask"};
  return {allowed.front(), second.response_text, "fallback_stance_1"};
}

}  // namespace

const char* to_string(CfmadVariant variant) {
  switch (variant) {
    case CfmadVariant::full: return "full";
    case CfmadVariant::direct_judge: return "direct_judge";
    case CfmadVariant::replace_self_reflection: return "replace_self_reflection";
    case CfmadVariant::replace_mad: return "replace_mad";
  }
  return "full";
}

CfmadVariant cfmad_variant_from_string(const std::string& name) {
  if (name == "full") return CfmadVariant::full;
  if (name == "direct_judge") return CfmadVariant::direct_judge;
  if (name == "replace_self_reflection") return CfmadVariant::replace_self_reflection;
  if (name == "replace_mad") return CfmadVariant::replace_mad;
  throw ConfigError("unknown cfmad variant '" + name + "'");
}

void validate(const CfmadConfig& config) {
  if (config.stance_count < 2) {
    throw ConfigError("stance_count must be at least 2, got " +
                      std::to_string(config.stance_count));
  }
  if (config.debate_rounds < 0) {
    throw ConfigError("debate_rounds must be non-negative, got " +
                      std::to_string(config.debate_rounds));
  }
  if (config.temperature < 0.0 || config.temperature > 2.0) {
    throw ConfigError("temperature must lie in [0, 2], got " +
                      std::to_string(config.temperature));
  }
  if (config.cot_samples < 1) {
    throw ConfigError("cot_samples must be at least 1, got " +
                      std::to_string(config.cot_samples));
  }
  if (config.variant == CfmadVariant::direct_judge && config.debate_rounds != 0) {
    throw ConfigError("direct_judge skips the debate; debate_rounds must be 0");
  }
  if (config.variant == CfmadVariant::full && config.debate_rounds < 1) {
    throw ConfigError("the full variant needs at least one debate round");
  }
}

std::string format_dossiers(const Question& q, const std::vector<StanceDossier>& dossiers) {
  // Binary tasks present the positive side first, regardless of stance
  // selection order; other tasks keep selection order.
  std::vector<const StanceDossier*> ordered;
  for (const auto& d : dossiers) ordered.push_back(&d);
  if (is_binary(q.task_kind)) {
    std::stable_sort(ordered.begin(), ordered.end(), [](const auto* a, const auto* b) {
      return labels_equal(a->stance.label, kTrueLabel) >
             labels_equal(b->stance.label, kTrueLabel);
    });
  }

  std::string out;
  for (const auto* d : ordered) {
    if (!out.empty()) out += "\n\n";
    if (is_binary(q.task_kind)) {
      out += labels_equal(d->stance.label, kTrueLabel) ? "Positive side:" : "Negative side:";
    } else {
      out += "Analysis for Option " + d->stance.label + ":";
    }
    for (const auto& [speaker, text] : d->turns) {
      out += "\n" + speaker + ": " + text;
    }
  }
  return out;
}

Abduction generate_abduction(const Question& q, const CandidateAnswer& stance,
                             const TemplateRegistry& templates, CallSession& session) {
  const std::string prompt = templates.render(
      "cfmad.abduction." + template_family(q.task_kind), stance_bindings(q, stance));
  const ChatExchange ex = session.call(prompt, "abduction_" + stance.label);
  return {stance, ex.response_text, ex.id};
}

DebateTranscript run_debate(const Question& q, const Abduction& abduction, int rounds,
                            const TemplateRegistry& templates, CallSession& session) {
  if (rounds < 1) throw ConfigError("run_debate requires at least one round");
  const std::string family = template_family(q.task_kind);
  const std::string& label = abduction.stance.label;

  DebateTranscript transcript{abduction.stance, abduction, {}};
  // The running pair dialogue: the abduction plus every completed exchange.
  // It is all either side of this pair ever sees of the debate.
  std::string dialogue = abduction.rationale_text;
  for (int round = 1; round <= rounds; ++round) {
    Bindings critic_b = stance_bindings(q, abduction.stance);
    critic_b["reply_of_assistant"] = dialogue;
    const ChatExchange critic_ex =
        session.call(templates.render("cfmad.critic." + family, critic_b),
                     "critic_" + label + "_r" + std::to_string(round));
    transcript.turns.push_back(
        {DebateRole::critic, round, critic_ex.response_text, critic_ex.id});

    Bindings agent_b = stance_bindings(q, abduction.stance);
    agent_b["reply_of_assistant"] = dialogue;
    agent_b["reply_of_critic"] = critic_ex.response_text;
    const ChatExchange agent_ex =
        session.call(templates.render("cfmad.agent." + family, agent_b),
                     "agent_" + label + "_r" + std::to_string(round));
    transcript.turns.push_back(
        {DebateRole::abducting_agent, round, agent_ex.response_text, agent_ex.id});

    dialogue += "\nCritic: " + critic_ex.response_text +
                "\nAssistant: " + agent_ex.response_text;
  }
  return transcript;
}

Judgment adjudicate(const Question& q, const std::vector<DebateTranscript>& transcripts,
                    const TemplateRegistry& templates, CallSession& session) {
  if (transcripts.empty()) throw ConfigError("adjudicate needs at least one transcript");
  return judge_over_dossiers(q, dossiers_from_transcripts(transcripts), templates, session);
}

RunRecord run_variant(const Question& q, const StanceSelection& selection,
                      const CfmadConfig& config, ChatBackend& backend,
                      const TemplateRegistry& templates, std::vector<ChatExchange>& log) {
  validate(config);
  if (selection.stances.empty()) throw ConfigError("run_variant needs at least one stance");
  CallSession session{backend, log, config.seed, config.temperature,
                      static_cast<int>(log.size())};
  const std::string family = template_family(q.task_kind);

  std::vector<Abduction> abductions;
  for (const auto& stance : selection.stances) {
    abductions.push_back(generate_abduction(q, stance, templates, session));
  }

  std::vector<StanceDossier> dossiers;
  Judgment judgment;
  switch (config.variant) {
    case CfmadVariant::full: {
      std::vector<DebateTranscript> transcripts;
      for (const auto& abd : abductions) {
        transcripts.push_back(run_debate(q, abd, config.debate_rounds, templates, session));
      }
      dossiers = dossiers_from_transcripts(transcripts);
      judgment = judge_over_dossiers(q, dossiers, templates, session);
      break;
    }
    case CfmadVariant::direct_judge: {
      for (const auto& abd : abductions) {
        dossiers.push_back({abd.stance, {{"Assistant", abd.rationale_text}}});
      }
      judgment = judge_over_dossiers(q, dossiers, templates, session);
      break;
    }
    case CfmadVariant::replace_self_reflection: {
      for (const auto& abd : abductions) {
        Bindings b = question_bindings(q);
        b["cot_reply"] = abd.rationale_text;
        const ChatExchange ex = session.call(templates.render("reflection.reflect", b),
                                             "reflection_" + abd.stance.label);
        dossiers.push_back({abd.stance,
                            {{"Assistant", abd.rationale_text},
                             {"Reflection", ex.response_text}}});
      }
      judgment = judge_over_dossiers(q, dossiers, templates, session);
      break;
    }
    case CfmadVariant::replace_mad: {
      // The abductions stand in for the agents' first-round answers; two
      // update rounds follow, each agent seeing the others' latest replies.
      std::vector<std::string> latest;
      for (const auto& abd : abductions) {
        latest.push_back(abd.rationale_text);
        dossiers.push_back({abd.stance, {{"Assistant", abd.rationale_text}}});
      }
      for (int round = 2; round <= 3; ++round) {
        std::vector<std::string> next = latest;
        for (std::size_t i = 0; i < abductions.size(); ++i) {
          std::string peers;
          int peer_no = 0;
          for (std::size_t j = 0; j < latest.size(); ++j) {
            if (j == i) continue;
            if (peer_no > 0) peers += "\n";
            peers += "Other agent" + std::to_string(++peer_no) + ": " + latest[j];
          }
          Bindings b = question_bindings(q);
          b["own_response"] = latest[i];
          b["peer_responses"] = peers;
          const ChatExchange ex = session.call(
              templates.render("mad.debate." + family, b),
              "mad_update_" + abductions[i].stance.label + "_r" + std::to_string(round));
          next[i] = ex.response_text;
          dossiers[i].turns.emplace_back("Assistant (round " + std::to_string(round) + ")",
                                         ex.response_text);
        }
        latest = std::move(next);
      }
      judgment = judge_over_dossiers(q, dossiers, templates, session);
      break;
    }
  }

  RunRecord record = make_run_record(q, "cfmad", judgment.predicted_label, log);

  // Analysis-ready intermediates: what each agent ended up asserting, and
  // how the judge's label was obtained.
  const ParseRule rule = rule_for_task(q.task_kind);
  const auto option_labels = q.option_labels();
  Json stance_labels = Json::array();
  Json stance_origins = Json::array();
  for (const auto& stance : selection.stances) {
    stance_labels.push_back(stance.label);
    stance_origins.push_back(to_string(stance.origin));
  }
  Json final_texts = Json::array();
  Json final_labels = Json::array();
  for (const auto& d : dossiers) {
    const std::string& text = d.turns.back().second;
    final_texts.push_back(text);
    final_labels.push_back(parse_answer(text, rule, option_labels));
  }
  Json inter;
  inter["variant"] = to_string(config.variant);
  inter["stance_labels"] = std::move(stance_labels);
  inter["stance_origins"] = std::move(stance_origins);
  if (!selection.vote_histogram.empty()) {
    Json hist;
    for (const auto& [stance_label, votes] : selection.vote_histogram) {
      hist[stance_label] = votes;
    }
    inter["vote_histogram"] = std::move(hist);
  }
  inter["agent_final_texts"] = std::move(final_texts);
  inter["agent_final_labels"] = std::move(final_labels);
  inter["judge"] = Json{{"parse_rule", judgment.parse_rule}, {"raw_text", judgment.raw_text}};
  record.intermediates = std::move(inter);
  return record;
}

RunRecord run_cfmad_question(const Question& q, const CfmadConfig& config, ChatBackend& backend,
                             const TemplateRegistry& templates, std::vector<ChatExchange>& log) {
  validate(config);
  const auto violations = validate_question(q);
  if (!violations.empty()) {
    throw SchemaError("question " + q.id, "", violations.front());
  }
  CandidateConfig candidates;
  candidates.stance_count = config.stance_count;
  candidates.cot_samples = config.cot_samples;
  candidates.cot_temperature = config.temperature;
  candidates.seed = config.seed;
  const StanceSelection selection = select_stances(q, backend, templates, candidates, log);
  return run_variant(q, selection, config, backend, templates, log);
}

}  // namespace cfmad
