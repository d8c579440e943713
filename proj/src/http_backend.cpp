#include <chrono>
#include <cstdlib>
#include <memory>
#include <semaphore>
#include <thread>

#include <httplib.h>

#include "cfmad/backend.hpp"

namespace cfmad {
namespace {

// Splits "http://host:port/v1" into client target and path prefix.
struct ParsedUrl {
  std::string origin;
  std::string path_prefix;
};

ParsedUrl parse_base_url(const std::string& base_url) {
  const auto scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos) {
    throw ConfigError("backend.base_url must include a scheme: " + base_url);
  }
  const auto path_start = base_url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) {
    return {base_url, ""};
  }
  std::string prefix = base_url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {base_url.substr(0, path_start), prefix};
}

bool retryable_status(int status) { return status == 429 || status >= 500; }

}  // namespace

struct HttpBackend::Impl {
  explicit Impl(const HttpBackendConfig& config)
      : client(parse_base_url(config.base_url).origin),
        path(parse_base_url(config.base_url).path_prefix + "/chat/completions"),
        slots(config.max_concurrency > 0 ? config.max_concurrency : 1) {
    const auto timeout = std::chrono::milliseconds(
        static_cast<long long>(config.timeout_s * 1000.0));
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    if (!config.api_key_env.empty()) {
      if (const char* key = std::getenv(config.api_key_env.c_str())) {
        api_key = key;
      }
    }
    if (!config.cache_dir.empty()) {
      cache = std::make_unique<ResponseCache>(config.cache_dir);
    }
  }

  httplib::Client client;
  std::string path;
  std::string api_key;
  std::unique_ptr<ResponseCache> cache;
  std::counting_semaphore<256> slots;
};

HttpBackend::HttpBackend(HttpBackendConfig config)
    : config_(std::move(config)), impl_(std::make_unique<Impl>(config_)) {}

HttpBackend::~HttpBackend() = default;

ChatExchange HttpBackend::complete(const std::vector<ChatMessage>& messages,
                                   const SamplingConfig& sampling) {
  if (messages.empty() || messages.back().role != ChatMessage::Role::user) {
    throw std::invalid_argument("complete() requires a non-empty message list ending with user");
  }
  count_call();

  ChatExchange ex;
  ex.id = exchange_id_for(config_.model_name, messages, sampling);
  ex.messages = messages;
  ex.sampling = sampling;
  const std::string key = exchange_key(config_.model_name, messages, sampling);

  if (impl_->cache && ResponseCache::cacheable(sampling)) {
    if (auto hit = impl_->cache->lookup(ex.id, key)) {
      ex.response_text = hit->response_text;
      ex.tokens_in = hit->tokens_in;
      ex.tokens_out = hit->tokens_out;
      ex.cached = true;
      return ex;
    }
  }

  Json body;
  body["model"] = config_.model_name;
  Json msgs = Json::array();
  for (const auto& m : messages) msgs.push_back(to_json(m));
  body["messages"] = msgs;
  body["temperature"] = sampling.temperature;
  if (sampling.seed) body["seed"] = *sampling.seed;
  if (config_.max_tokens) body["max_tokens"] = *config_.max_tokens;
  const std::string payload = body.dump();

  httplib::Headers headers = {{"Content-Type", "application/json"}};
  if (!impl_->api_key.empty()) {
    headers.emplace("Authorization", "Bearer " + impl_->api_key);
  }

  impl_->slots.acquire();
  struct SlotRelease {
    std::counting_semaphore<256>& s;
    ~SlotRelease() { s.release(); }
  } release{impl_->slots};

  const RetryPolicy& policy = config_.retry;
  int attempt = 0;
  long long delay_ms = policy.initial_delay_ms;
  std::string last_error;
  bool rate_limited = false;

  while (true) {
    ++attempt;
    auto res = impl_->client.Post(impl_->path, headers, payload, "application/json");
    if (!res) {
      last_error = "transport failure: " + httplib::to_string(res.error());
    } else if (res->status == 200) {
      Json parsed;
      try {
        parsed = Json::parse(res->body);
      } catch (const Json::exception& e) {
        throw MalformedResponse(std::string{"response body is not JSON: "} + e.what());
      }
      if (!parsed.contains("choices") || !parsed["choices"].is_array() ||
          parsed["choices"].empty() || !parsed["choices"][0].contains("message") ||
          !parsed["choices"][0]["message"].contains("content")) {
        throw MalformedResponse("response lacks choices[0].message.content");
      }
      ex.response_text = parsed["choices"][0]["message"]["content"].get<std::string>();
      if (parsed.contains("usage")) {
        ex.tokens_in = parsed["usage"].value("prompt_tokens", 0LL);
        ex.tokens_out = parsed["usage"].value("completion_tokens", 0LL);
      }
      if (ex.tokens_in == 0 && ex.tokens_out == 0) {
        for (const auto& m : messages) ex.tokens_in += estimate_tokens(m.content);
        ex.tokens_out = estimate_tokens(ex.response_text);
      }
      ex.retries = attempt - 1;
      if (impl_->cache && ResponseCache::cacheable(sampling)) {
        impl_->cache->store(ex.id, key, {ex.response_text, ex.tokens_in, ex.tokens_out});
      }
      return ex;
    } else if (retryable_status(res->status)) {
      rate_limited = res->status == 429;
      last_error = "HTTP " + std::to_string(res->status);
    } else {
      // 400-class other than 429: never retried
      throw TransportError("HTTP " + std::to_string(res->status) + " from " + impl_->path +
                           ": " + res->body.substr(0, 200));
    }

    if (attempt >= policy.max_attempts) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
    delay_ms = static_cast<long long>(static_cast<double>(delay_ms) * policy.multiplier);
  }

  const std::string detail =
      last_error + " after " + std::to_string(attempt) + " attempts";
  if (rate_limited) throw RateLimited(detail);
  throw TransportError(detail);
}

}  // namespace cfmad
