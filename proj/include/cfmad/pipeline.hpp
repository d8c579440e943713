#pragma once

#include <string>
#include <utility>
#include <vector>

#include "cfmad/backend.hpp"
#include "cfmad/calls.hpp"
#include "cfmad/candidates.hpp"
#include "cfmad/core.hpp"
#include "cfmad/prompting.hpp"

namespace cfmad {

enum class CfmadVariant { full, direct_judge, replace_self_reflection, replace_mad };

const char* to_string(CfmadVariant variant);
CfmadVariant cfmad_variant_from_string(const std::string& name);

struct CfmadConfig {
  int stance_count = 2;     // M, clamped to the number of distinct options
  int debate_rounds = 1;    // R; must be 0 for direct_judge, >= 1 for full
  CfmadVariant variant = CfmadVariant::full;
  double temperature = 0.2;
  int cot_samples = 3;      // stance-selection votes on multi-choice tasks
  std::uint64_t seed = 0;   // per-question seed
};

/// Throws ConfigError on an inconsistent configuration.
void validate(const CfmadConfig& config);

/// One stance's material as presented to the judge: the abduction first,
/// then whatever the variant produced (debate turns, a reflection, or
/// multi-agent updates), as (speaker, text) lines.
struct StanceDossier {
  CandidateAnswer stance;
  std::vector<std::pair<std::string, std::string>> turns;
};

/// The debate-process block interpolated into the judge prompt: binary
/// tasks show a positive and a negative side in True-then-False order,
/// multi-choice shows one analysis block per option.
std::string format_dossiers(const Question& q, const std::vector<StanceDossier>& dossiers);

/// One backend call asking why the stance's answer would be correct. The
/// reply is kept verbatim; nothing is parsed or truth-checked.
Abduction generate_abduction(const Question& q, const CandidateAnswer& stance,
                             const TemplateRegistry& templates, CallSession& session);

/// Alternating critic/agent calls for one agent-critic pair. Each call sees
/// the question, the abduction, and this pair's prior turns only.
DebateTranscript run_debate(const Question& q, const Abduction& abduction, int rounds,
                            const TemplateRegistry& templates, CallSession& session);

/// One judge call over all pairs' transcripts. An unparseable reply earns a
/// single re-ask with the output-format reminder appended; if that also
/// fails, the result falls back to stance 1 with parse_rule
/// "fallback_stance_1". Never throws past backend errors.
Judgment adjudicate(const Question& q, const std::vector<DebateTranscript>& transcripts,
                    const TemplateRegistry& templates, CallSession& session);

/// Runs the configured variant over pre-selected stances. `log` must hold
/// the stance-selection exchanges already issued for this question; the
/// returned record accounts for every exchange in it.
RunRecord run_variant(const Question& q, const StanceSelection& selection,
                      const CfmadConfig& config, ChatBackend& backend,
                      const TemplateRegistry& templates, std::vector<ChatExchange>& log);

/// Stance selection plus run_variant for one question. `log` may already
/// hold the enumerate_open_ended exchanges when the question was
/// synthesized from an open-ended item; those calls are accounted too, and
/// the log survives if the run throws mid-way.
RunRecord run_cfmad_question(const Question& q, const CfmadConfig& config, ChatBackend& backend,
                             const TemplateRegistry& templates, std::vector<ChatExchange>& log);

}  // namespace cfmad
