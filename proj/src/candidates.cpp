#include "cfmad/candidates.hpp"

#include <algorithm>

#include "cfmad/calls.hpp"
#include "cfmad/rng.hpp"

namespace cfmad {
namespace {

/// Vote winner with ties broken by earliest first occurrence in sample order.
std::string majority_label(const std::vector<std::string>& parsed,
                           const std::map<std::string, int>& histogram) {
  int best_count = 0;
  for (const auto& [label, count] : histogram) best_count = std::max(best_count, count);
  for (const auto& label : parsed) {
    if (label == kUnparsed) continue;
    if (histogram.at(label) == best_count) return label;
  }
  return kUnparsed;
}

}  // namespace

StanceSelection select_stances(const Question& q, ChatBackend& backend,
                               const TemplateRegistry& templates, const CandidateConfig& config,
                               std::vector<ChatExchange>& log) {
  StanceSelection out;

  if (is_binary(q.task_kind)) {
    // The stance set is forced; no sampling happens.
    out.stances.push_back({kTrueLabel, kTrueLabel, CandidateOrigin::dataset_option});
    out.stances.push_back({kFalseLabel, kFalseLabel, CandidateOrigin::dataset_option});
    return out;
  }

  // Ordinals continue past any exchanges already in the log (open-ended
  // enumeration runs first) so per-call seeds never repeat within a question.
  CallSession session{backend, log, config.seed, config.cot_temperature,
                      static_cast<int>(log.size())};
  const std::string prompt =
      templates.render("cot." + template_family(q.task_kind), question_bindings(q));
  const ParseRule rule = rule_for_task(q.task_kind);
  const auto labels = q.option_labels();

  std::vector<std::string> parsed;
  for (int i = 0; i < config.cot_samples; ++i) {
    const ChatExchange ex = session.call(prompt, "stance_cot_" + std::to_string(i));
    const std::string label = parse_answer(ex.response_text, rule, labels);
    out.cot_samples.emplace_back(ex.response_text, label);
    parsed.push_back(label);
    if (label != kUnparsed) out.vote_histogram[label] += 1;
  }
  if (out.vote_histogram.empty()) {
    throw AllSamplesUnparsed("all " + std::to_string(config.cot_samples) +
                             " stance-selection samples were unparseable for question " + q.id);
  }

  const std::string winner = majority_label(parsed, out.vote_histogram);
  const QuestionOption* winner_opt = q.find_option(winner);
  out.stances.push_back(
      {winner, winner_opt != nullptr ? winner_opt->text : winner, CandidateOrigin::cot_majority});

  std::vector<const QuestionOption*> pool;
  for (const auto& o : q.options) {
    if (o.label != winner) pool.push_back(&o);
  }
  const std::size_t target = static_cast<std::size_t>(
      std::max(0, config.stance_count - 1));
  const std::size_t fills = std::min(target, pool.size());

  // Partial Fisher-Yates gives a uniform draw without replacement in drawn order.
  DeterministicRng rng(mix_seed(config.seed, 0x5741ae2bULL));
  for (std::size_t i = 0; i < fills; ++i) {
    const std::size_t pick = i + rng.below(pool.size() - i);
    std::swap(pool[i], pool[pick]);
    out.stances.push_back({pool[i]->label, pool[i]->text, CandidateOrigin::random_fill});
  }
  return out;
}

OpenEndedEnumeration enumerate_open_ended(const Question& q, ChatBackend& backend,
                                          const TemplateRegistry& templates,
                                          const CandidateConfig& config,
                                          std::vector<ChatExchange>& log) {
  if (q.task_kind != TaskKind::open_ended) {
    throw ConfigError("enumerate_open_ended requires an open_ended question, got " +
                      std::string(to_string(q.task_kind)));
  }

  CallSession session{backend, log, config.seed, config.open_ended_temperature,
                      static_cast<int>(log.size())};
  const std::string prompt = templates.render("cot.openended", question_bindings(q));
  const ParseRule rule{"last_number", ParseTarget::last_number};

  OpenEndedEnumeration out;
  std::vector<std::string> order;               // distinct answers by first appearance
  std::map<std::string, int> counts;
  for (int i = 0; i < config.open_ended_samples; ++i) {
    const ChatExchange ex = session.call(prompt, "open_ended_sample_" + std::to_string(i));
    const std::string value = parse_answer(ex.response_text, rule, {});
    out.samples.emplace_back(ex.response_text, value);
    if (value == kUnparsed) continue;
    if (counts.emplace(value, 0).second) order.push_back(value);
    counts[value] += 1;
  }
  if (order.empty()) {
    throw NoCandidates("no open-ended sample produced a numeric answer for question " + q.id);
  }

  // Frequency order, first appearance breaking ties.
  std::stable_sort(order.begin(), order.end(), [&](const std::string& a, const std::string& b) {
    return counts[a] > counts[b];
  });

  Question mc = q;
  mc.task_kind = TaskKind::multi_choice;
  mc.options.clear();
  const std::string gold_canonical =
      canonical_number(q.gold_label).value_or(trim(q.gold_label));
  for (std::size_t i = 0; i < order.size(); ++i) {
    const std::string label(1, static_cast<char>('A' + i));
    mc.options.push_back({label, order[i]});
    if (order[i] == gold_canonical) {
      mc.gold_label = label;
      out.gold_in_candidates = true;
    }
  }
  // When gold was never sampled, gold_label keeps the raw answer text and the
  // question is simply scored wrong downstream.
  out.question = std::move(mc);
  return out;
}

}  // namespace cfmad
