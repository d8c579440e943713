#include "cfmad/backend.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace cfmad {
namespace {

// Field/record separators keep the canonical key unambiguous even when
// message contents contain newlines.
constexpr char kFieldSep = '\x1f';
constexpr char kRecordSep = '\x1e';

std::uint64_t fnv1a(std::string_view s, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

std::string format_temperature(double t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", t);
  return std::string(buf);
}

}  // namespace

const char* to_string(ChatMessage::Role role) {
  switch (role) {
    case ChatMessage::Role::system: return "system";
    case ChatMessage::Role::user: return "user";
    case ChatMessage::Role::assistant: return "assistant";
  }
  return "user";
}

ChatMessage::Role chat_role_from_string(const std::string& name) {
  if (name == "system") return ChatMessage::Role::system;
  if (name == "user") return ChatMessage::Role::user;
  if (name == "assistant") return ChatMessage::Role::assistant;
  throw SchemaError("chat_message", "role", "unknown value '" + name + "'");
}

ChatMessage system_message(std::string content) {
  return {ChatMessage::Role::system, std::move(content)};
}
ChatMessage user_message(std::string content) {
  return {ChatMessage::Role::user, std::move(content)};
}
ChatMessage assistant_message(std::string content) {
  return {ChatMessage::Role::assistant, std::move(content)};
}

Json to_json(const ChatMessage& m) {
  return Json{{"role", to_string(m.role)}, {"content", m.content}};
}

ChatMessage chat_message_from_json(const Json& j) {
  return {chat_role_from_string(j.at("role").get<std::string>()),
          j.at("content").get<std::string>()};
}

Json to_json(const ChatExchange& e) {
  Json messages = Json::array();
  for (const auto& m : e.messages) messages.push_back(to_json(m));
  Json j;
  j["id"] = e.id;
  j["messages"] = messages;
  j["sampling"] = to_json(e.sampling);
  j["response_text"] = e.response_text;
  j["tokens_in"] = e.tokens_in;
  j["tokens_out"] = e.tokens_out;
  j["cached"] = e.cached;
  j["retries"] = e.retries;
  return j;
}

ChatExchange chat_exchange_from_json(const Json& j) {
  ChatExchange e;
  e.id = j.at("id").get<std::string>();
  for (const auto& m : j.value("messages", Json::array())) {
    e.messages.push_back(chat_message_from_json(m));
  }
  e.sampling = sampling_from_json(j.value("sampling", Json::object()));
  e.response_text = j.at("response_text").get<std::string>();
  e.tokens_in = j.value("tokens_in", 0LL);
  e.tokens_out = j.value("tokens_out", 0LL);
  e.cached = j.value("cached", false);
  e.retries = j.value("retries", 0);
  return e;
}

std::string exchange_key(const std::string& model, const std::vector<ChatMessage>& messages,
                         const SamplingConfig& sampling) {
  std::string key;
  key += model;
  key += kFieldSep;
  key += format_temperature(sampling.temperature);
  key += kFieldSep;
  key += sampling.seed ? std::to_string(*sampling.seed) : "none";
  for (const auto& m : messages) {
    key += kRecordSep;
    key += to_string(m.role);
    key += kFieldSep;
    key += m.content;
  }
  return key;
}

std::string exchange_id_for(const std::string& model, const std::vector<ChatMessage>& messages,
                            const SamplingConfig& sampling) {
  const std::string key = exchange_key(model, messages, sampling);
  return hex64(fnv1a(key, 0xcbf29ce484222325ULL)) + hex64(fnv1a(key, 0x84222325cbf29ce4ULL));
}

long long estimate_tokens(std::string_view text) {
  long long tokens = 0;
  std::size_t run = 0;
  auto flush_run = [&] {
    if (run > 0) {
      tokens += static_cast<long long>((run + 3) / 4);
      run = 0;
    }
  };
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      ++run;
    } else {
      flush_run();
      if (!std::isspace(c)) ++tokens;  // punctuation
    }
  }
  flush_run();
  return tokens;
}

namespace {

const char* matcher_name(ScriptEntry::Matcher m) {
  switch (m) {
    case ScriptEntry::Matcher::exact_messages: return "exact_messages";
    case ScriptEntry::Matcher::substring_of_last_user: return "substring_of_last_user";
    case ScriptEntry::Matcher::sequence_index: return "sequence_index";
  }
  return "substring_of_last_user";
}

ScriptEntry::Matcher matcher_from_string(const std::string& name) {
  if (name == "exact_messages") return ScriptEntry::Matcher::exact_messages;
  if (name == "substring_of_last_user") return ScriptEntry::Matcher::substring_of_last_user;
  if (name == "sequence_index") return ScriptEntry::Matcher::sequence_index;
  throw SchemaError("script_entry", "matcher", "unknown value '" + name + "'");
}

std::string messages_as_text(const std::vector<ChatMessage>& messages) {
  std::string out;
  for (const auto& m : messages) {
    out += to_string(m.role);
    out += ": ";
    out += m.content;
    out += '\n';
  }
  return out;
}

}  // namespace

Json to_json(const ScriptEntry& e) {
  Json j;
  j["matcher"] = matcher_name(e.matcher);
  if (e.matcher == ScriptEntry::Matcher::sequence_index) {
    j["key"] = e.key_index;
  } else {
    j["key"] = e.key_text;
  }
  j["response"] = e.response_text;
  return j;
}

ScriptEntry script_entry_from_json(const Json& j) {
  ScriptEntry e;
  try {
    e.matcher = matcher_from_string(j.at("matcher").get<std::string>());
    if (e.matcher == ScriptEntry::Matcher::sequence_index) {
      e.key_index = j.at("key").get<int>();
    } else {
      e.key_text = j.at("key").get<std::string>();
    }
    e.response_text = j.at("response").get<std::string>();
  } catch (const Json::exception& ex) {
    throw SchemaError("script_entry", "json", ex.what());
  }
  return e;
}

std::vector<ScriptEntry> load_script(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open script file: " + path.string());
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw SchemaError(path.string(), "json", e.what());
  }
  const Json* entries = nullptr;
  if (j.is_array()) {
    entries = &j;
  } else if (j.is_object() && j.contains("script")) {
    entries = &j["script"];
  } else {
    throw SchemaError(path.string(), "script", "expected an array or an object with 'script'");
  }
  std::vector<ScriptEntry> out;
  for (const auto& e : *entries) out.push_back(script_entry_from_json(e));
  return out;
}

MockBackend::MockBackend(std::vector<ScriptEntry> script, std::string model)
    : script_(std::move(script)), model_(std::move(model)) {
  std::set<int> indices;
  for (const auto& e : script_) {
    if (e.matcher == ScriptEntry::Matcher::sequence_index) {
      if (!indices.insert(e.key_index).second) {
        throw SchemaError("mock_script", "key",
                          "duplicate sequence index " + std::to_string(e.key_index));
      }
    }
  }
  int expected = 0;
  for (int idx : indices) {
    if (idx != expected++) {
      throw SchemaError("mock_script", "key", "sequence indices must be contiguous from 0");
    }
  }
  sequence_entries_.resize(indices.size());
  for (const auto& e : script_) {
    if (e.matcher == ScriptEntry::Matcher::sequence_index) {
      sequence_entries_[static_cast<std::size_t>(e.key_index)] = &e;
    }
  }
}

ChatExchange MockBackend::complete(const std::vector<ChatMessage>& messages,
                                   const SamplingConfig& sampling) {
  if (messages.empty() || messages.back().role != ChatMessage::Role::user) {
    throw std::invalid_argument("complete() requires a non-empty message list ending with user");
  }
  count_call();
  std::string response;
  {
    std::lock_guard<std::mutex> lock(mutex_);
    captured_.push_back({messages, sampling});
    const std::string& last_user = messages.back().content;
    const ScriptEntry* hit = nullptr;
    const std::string all = messages_as_text(messages);
    for (const auto& e : script_) {
      if (e.matcher == ScriptEntry::Matcher::exact_messages && e.key_text == all) {
        hit = &e;
        break;
      }
    }
    if (hit == nullptr) {
      for (const auto& e : script_) {
        if (e.matcher == ScriptEntry::Matcher::substring_of_last_user &&
            last_user.find(e.key_text) != std::string::npos) {
          hit = &e;
          break;
        }
      }
    }
    if (hit == nullptr && sequence_cursor_ < sequence_entries_.size()) {
      hit = sequence_entries_[sequence_cursor_++];
    }
    if (hit == nullptr) {
      const std::string snippet = last_user.substr(0, 120);
      throw ScriptExhausted("no script entry matches request (last user message starts: \"" +
                            snippet + "\")");
    }
    response = hit->response_text;
  }

  ChatExchange ex;
  ex.id = exchange_id_for(model_, messages, sampling);
  ex.messages = messages;
  ex.sampling = sampling;
  ex.response_text = response;
  long long in_tokens = 0;
  for (const auto& m : messages) in_tokens += estimate_tokens(m.content);
  ex.tokens_in = in_tokens;
  ex.tokens_out = estimate_tokens(response);
  ex.cached = false;
  return ex;
}

std::vector<CapturedCall> MockBackend::captured() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return captured_;
}

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) throw IoError("cannot create cache directory " + dir_.string() + ": " + ec.message());
}

bool ResponseCache::cacheable(const SamplingConfig& sampling) {
  return sampling.temperature == 0.0 || sampling.seed.has_value();
}

std::optional<ResponseCache::Entry> ResponseCache::lookup(const std::string& id,
                                                          const std::string& key) const {
  const auto path = dir_ / (id + ".json");
  std::ifstream in(path);
  if (!in) return std::nullopt;
  Json j;
  try {
    in >> j;
  } catch (const Json::exception&) {
    return std::nullopt;  // treat a damaged entry as a miss
  }
  if (j.value("key", std::string{}) != key) return std::nullopt;
  Entry e;
  e.response_text = j.value("response_text", std::string{});
  e.tokens_in = j.value("tokens_in", 0LL);
  e.tokens_out = j.value("tokens_out", 0LL);
  return e;
}

void ResponseCache::store(const std::string& id, const std::string& key, const Entry& entry) {
  std::lock_guard<std::mutex> lock(write_mutex_);
  Json j;
  j["key"] = key;
  j["response_text"] = entry.response_text;
  j["tokens_in"] = entry.tokens_in;
  j["tokens_out"] = entry.tokens_out;
  const auto tmp = dir_ / (id + ".tmp");
  const auto final_path = dir_ / (id + ".json");
  {
    std::ofstream out(tmp);
    if (!out) throw IoError("cannot write cache entry " + tmp.string());
    out << j.dump();
  }
  std::error_code ec;
  std::filesystem::rename(tmp, final_path, ec);
  if (ec) throw IoError("cannot finalize cache entry " + final_path.string() + ": " + ec.message());
}

}  // namespace cfmad
