#pragma once

#include <string>
#include <vector>

#include "cfmad/backend.hpp"
#include "cfmad/rng.hpp"

namespace cfmad {

/// Issues single-turn user prompts for one question. Each call gets a seed
/// derived from the per-question seed and the call ordinal, which keeps
/// exchange ids distinct for repeated prompts and makes runs reproducible.
struct CallSession {
  ChatBackend& backend;
  std::vector<ChatExchange>& log;
  std::uint64_t question_seed = 0;
  double temperature = 0.2;
  int ordinal = 0;

  ChatExchange call(const std::string& prompt, const std::string& variant) {
    return call_at(prompt, variant, temperature);
  }

  ChatExchange call_at(const std::string& prompt, const std::string& variant,
                       double call_temperature) {
    SamplingConfig sampling;
    sampling.temperature = call_temperature;
    sampling.prompt_variant = variant;
    sampling.seed = mix_seed(question_seed, static_cast<std::uint64_t>(ordinal++));
    ChatExchange ex = backend.complete({user_message(prompt)}, sampling);
    log.push_back(ex);
    return ex;
  }
};

/// RunRecord skeleton accounting for every exchange in the log; callers add
/// method-specific intermediates afterwards.
inline RunRecord make_run_record(const Question& q, std::string method, std::string prediction,
                                 const std::vector<ChatExchange>& log) {
  RunRecord record;
  record.question_id = q.id;
  record.method = std::move(method);
  record.prediction = std::move(prediction);
  record.gold = q.gold_label;
  for (const auto& ex : log) {
    record.exchange_ids.push_back(ex.id);
    record.tokens_in += ex.tokens_in;
    record.tokens_out += ex.tokens_out;
  }
  record.prompts_used = static_cast<int>(log.size());
  return record;
}

}  // namespace cfmad
