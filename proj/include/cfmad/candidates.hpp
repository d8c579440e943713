#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "cfmad/backend.hpp"
#include "cfmad/core.hpp"
#include "cfmad/prompting.hpp"

namespace cfmad {

/// Every chain-of-thought sample during stance selection failed to parse.
class AllSamplesUnparsed : public Error {
 public:
  using Error::Error;
};

/// Open-ended enumeration produced no usable candidate answers.
class NoCandidates : public Error {
 public:
  using Error::Error;
};

struct CandidateConfig {
  int stance_count = 2;          // M; clamped to the number of distinct options
  int cot_samples = 3;
  double cot_temperature = 0.2;
  int open_ended_samples = 5;    // k
  double open_ended_temperature = 1.0;
  std::uint64_t seed = 0;        // per-question seed
};

struct StanceSelection {
  std::vector<CandidateAnswer> stances;
  std::vector<std::pair<std::string, std::string>> cot_samples;  // (raw, parsed label)
  std::map<std::string, int> vote_histogram;
};

/// Builds the stance set. Binary tasks return [True, False] without any
/// backend call. Multi-choice issues `cot_samples` chain-of-thought calls,
/// takes the vote winner as stance 1 (earliest sample breaks ties) and fills
/// the remaining stances uniformly without replacement from the other
/// options under the per-question seed.
StanceSelection select_stances(const Question& q, ChatBackend& backend,
                               const TemplateRegistry& templates, const CandidateConfig& config,
                               std::vector<ChatExchange>& log);

struct OpenEndedEnumeration {
  Question question;             // multi_choice form
  bool gold_in_candidates = false;
  std::vector<std::pair<std::string, std::string>> samples;  // (raw, parsed number)
};

/// Samples k chain-of-thought answers, keeps the distinct final numbers in
/// frequency order and relabels them A, B, ... to turn an open-ended item
/// into a multi-choice one. The gold answer is not forced into the
/// candidate set; its presence is only recorded.
OpenEndedEnumeration enumerate_open_ended(const Question& q, ChatBackend& backend,
                                          const TemplateRegistry& templates,
                                          const CandidateConfig& config,
                                          std::vector<ChatExchange>& log);

}  // namespace cfmad
