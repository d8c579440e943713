#pragma once

#include <atomic>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cfmad/core.hpp"

namespace cfmad {

class BackendError : public Error {
 public:
  using Error::Error;
};

/// Network failure or non-retryable HTTP error, surfaced after the retry
/// policy is exhausted.
class TransportError : public BackendError {
 public:
  using BackendError::BackendError;
};

/// HTTP 429 that persisted through every backoff attempt.
class RateLimited : public BackendError {
 public:
  using BackendError::BackendError;
};

/// Response body missing the fields the chat-completions shape requires.
class MalformedResponse : public BackendError {
 public:
  using BackendError::BackendError;
};

/// The scripted mock has no entry matching the request.
class ScriptExhausted : public BackendError {
 public:
  using BackendError::BackendError;
};

struct ChatMessage {
  enum class Role { system, user, assistant };
  Role role = Role::user;
  std::string content;
  bool operator==(const ChatMessage&) const = default;
};

const char* to_string(ChatMessage::Role role);
ChatMessage::Role chat_role_from_string(const std::string& name);

ChatMessage system_message(std::string content);
ChatMessage user_message(std::string content);
ChatMessage assistant_message(std::string content);

/// One prompt/response pair. `id` is a stable content hash of
/// (model, messages, temperature, seed); whitespace differences in any
/// message produce a different id.
struct ChatExchange {
  std::string id;
  std::vector<ChatMessage> messages;
  SamplingConfig sampling;
  std::string response_text;
  long long tokens_in = 0;
  long long tokens_out = 0;
  bool cached = false;
  int retries = 0;
};

Json to_json(const ChatMessage& m);
ChatMessage chat_message_from_json(const Json& j);
Json to_json(const ChatExchange& e);
ChatExchange chat_exchange_from_json(const Json& j);

/// Canonical request key; the exchange id is a hash of this string.
std::string exchange_key(const std::string& model, const std::vector<ChatMessage>& messages,
                         const SamplingConfig& sampling);
std::string exchange_id_for(const std::string& model, const std::vector<ChatMessage>& messages,
                            const SamplingConfig& sampling);

/// Token-count approximation used when the provider does not report usage:
/// alphanumeric runs cost ceil(len/4), every punctuation character costs 1.
/// Monotone under appending text; "" costs 0.
long long estimate_tokens(std::string_view text);

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;

  /// Issues one chat completion. `messages` must be non-empty and end with a
  /// user message.
  virtual ChatExchange complete(const std::vector<ChatMessage>& messages,
                                const SamplingConfig& sampling) = 0;
  virtual std::string model_name() const = 0;

  long long calls() const { return calls_.load(); }

 protected:
  void count_call() { calls_.fetch_add(1); }

 private:
  std::atomic<long long> calls_{0};
};

struct ScriptEntry {
  enum class Matcher { exact_messages, substring_of_last_user, sequence_index };
  Matcher matcher = Matcher::substring_of_last_user;
  std::string key_text;
  int key_index = -1;
  std::string response_text;
};

Json to_json(const ScriptEntry& e);
ScriptEntry script_entry_from_json(const Json& j);

/// Parses a script file: either a bare JSON array of entries, an object with
/// a "script" array, or a fixture file whose "script" field is used.
std::vector<ScriptEntry> load_script(const std::filesystem::path& path);

struct CapturedCall {
  std::vector<ChatMessage> messages;
  SamplingConfig sampling;
};

/// Deterministic scripted backend. Matching order: exact_messages entries,
/// then substring_of_last_user entries in script order, then sequence_index
/// entries in index order. Thread safe; sequence entries are consumed
/// globally, so scripts relying on them should run single-threaded.
class MockBackend : public ChatBackend {
 public:
  explicit MockBackend(std::vector<ScriptEntry> script, std::string model = "mock");

  ChatExchange complete(const std::vector<ChatMessage>& messages,
                        const SamplingConfig& sampling) override;
  std::string model_name() const override { return model_; }

  std::vector<CapturedCall> captured() const;

 private:
  std::vector<ScriptEntry> script_;
  std::vector<const ScriptEntry*> sequence_entries_;
  std::string model_;
  std::size_t sequence_cursor_ = 0;
  std::vector<CapturedCall> captured_;
  mutable std::mutex mutex_;
};

/// On-disk content-addressed response store. One file per exchange id; the
/// stored request key is verified on read so a hash collision degrades to a
/// miss. Concurrent readers, serialized writers.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir);

  struct Entry {
    std::string response_text;
    long long tokens_in = 0;
    long long tokens_out = 0;
  };

  std::optional<Entry> lookup(const std::string& id, const std::string& key) const;
  void store(const std::string& id, const std::string& key, const Entry& entry);

  /// Stochastic calls are cacheable only when a seed pins them; caching
  /// unseeded temperature > 0 calls would collapse sampling diversity.
  static bool cacheable(const SamplingConfig& sampling);

 private:
  std::filesystem::path dir_;
  mutable std::mutex write_mutex_;
};

struct RetryPolicy {
  int max_attempts = 3;
  int initial_delay_ms = 1000;
  double multiplier = 2.0;
};

struct HttpBackendConfig {
  std::string base_url;  // e.g. "http://localhost:8080/v1"
  std::string model_name = "gpt-3.5-turbo";
  std::string api_key_env = "OPENAI_API_KEY";
  double timeout_s = 60.0;
  int max_concurrency = 4;
  std::string cache_dir;  // empty disables the cache
  RetryPolicy retry;
  std::optional<int> max_tokens;
};

/// Chat-completions client for OpenAI-compatible endpoints. Retries 429 and
/// 5xx per the policy; other 4xx statuses fail immediately.
class HttpBackend : public ChatBackend {
 public:
  explicit HttpBackend(HttpBackendConfig config);
  ~HttpBackend() override;

  ChatExchange complete(const std::vector<ChatMessage>& messages,
                        const SamplingConfig& sampling) override;
  std::string model_name() const override { return config_.model_name; }

 private:
  struct Impl;
  HttpBackendConfig config_;
  std::unique_ptr<Impl> impl_;
};

}  // namespace cfmad
