#pragma once

#include <string>
#include <vector>

#include "cfmad/backend.hpp"
#include "cfmad/calls.hpp"
#include "cfmad/candidates.hpp"  // AllSamplesUnparsed
#include "cfmad/core.hpp"
#include "cfmad/prompting.hpp"

namespace cfmad {

/// The self-curate reply held fewer than three ###...@@@ perspective
/// blocks. run_self_contrast handles it by falling back to the three
/// multi-agent initial prompts and recording the fallback.
class PerspectiveExtractionFailed : public Error {
 public:
  using Error::Error;
};

enum class BaselineMethod { cot, self_reflection, self_consistency, mad, self_contrast };

const char* to_string(BaselineMethod method);
BaselineMethod baseline_method_from_string(const std::string& name);

struct BaselineConfig {
  BaselineMethod method = BaselineMethod::cot;
  int n_samples = 7;         // self_consistency votes
  int n_agents = 3;          // mad debaters
  int n_rounds = 3;          // mad rounds including the initial one
  double temperature = 0.2;  // 1.0 for self_consistency, which needs diversity
  std::uint64_t seed = 0;    // per-question seed

  /// Per-method defaults (self_consistency gets temperature 1.0, everything
  /// else 0.2).
  static BaselineConfig for_method(BaselineMethod method);
};

void validate(const BaselineConfig& config);

/// Text between each "###"/"@@@" marker pair, trimmed, at most three.
/// Throws PerspectiveExtractionFailed when fewer than three blocks exist.
std::vector<std::string> extract_perspectives(const std::string& curate_reply);

/// All runners append every exchange they issue to `log`, which therefore
/// survives even when a runner throws mid-way.

/// One chain-of-thought call; the reply's final answer is the prediction.
RunRecord run_cot(const Question& q, const BaselineConfig& config, ChatBackend& backend,
                  const TemplateRegistry& templates, std::vector<ChatExchange>& log);

/// Answer, reflect on the answer, then revise; the revision is
/// authoritative regardless of the initial reply.
RunRecord run_self_reflection(const Question& q, const BaselineConfig& config,
                              ChatBackend& backend, const TemplateRegistry& templates,
                              std::vector<ChatExchange>& log);

/// n_samples chain-of-thought calls; plurality vote among parsed answers,
/// earliest sample breaking ties. Throws AllSamplesUnparsed when no sample
/// yields a label.
RunRecord run_self_consistency(const Question& q, const BaselineConfig& config,
                               ChatBackend& backend, const TemplateRegistry& templates,
                               std::vector<ChatExchange>& log);

/// Multi-agent debate: distinct initial prompts, update rounds where each
/// agent sees the others' latest replies, then a majority-instructed judge.
/// The prediction is the judge's parsed label; the programmatic majority is
/// recorded alongside for audit.
RunRecord run_mad(const Question& q, const BaselineConfig& config, ChatBackend& backend,
                  const TemplateRegistry& templates, std::vector<ChatExchange>& log);

/// Curate three perspective prompts, answer under each, contrast the
/// answers into differences plus a checklist, then reflect into a final
/// revised answer.
RunRecord run_self_contrast(const Question& q, const BaselineConfig& config,
                            ChatBackend& backend, const TemplateRegistry& templates,
                            std::vector<ChatExchange>& log);

/// Dispatch on config.method.
RunRecord run_baseline(const Question& q, const BaselineConfig& config, ChatBackend& backend,
                       const TemplateRegistry& templates, std::vector<ChatExchange>& log);

}  // namespace cfmad
