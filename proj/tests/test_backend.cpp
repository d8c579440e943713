#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <thread>

#include <httplib.h>

#include "cfmad/backend.hpp"

using namespace cfmad;

namespace {

std::vector<ChatMessage> user_only(const std::string& text) { return {user_message(text)}; }

std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("estimate_tokens counts alphanumeric runs and punctuation") {
  CHECK(estimate_tokens("") == 0);
  CHECK(estimate_tokens("word") == 1);
  CHECK(estimate_tokens("hello") == 2);  // ceil(5/4)
  CHECK(estimate_tokens("a b") == 2);    // whitespace is free
  CHECK(estimate_tokens("a.b") == 3);
  CHECK(estimate_tokens("hello, world") == 5);

  const std::string base = "some reply text";
  CHECK(estimate_tokens(base + " and more") >= estimate_tokens(base));
}

TEST_CASE("exchange ids are stable and content sensitive") {
  SamplingConfig sampling;
  sampling.temperature = 0.2;
  const auto messages = user_only("hello");
  const std::string id = exchange_id_for("m", messages, sampling);
  CHECK(id.size() == 32);
  CHECK(id == exchange_id_for("m", messages, sampling));
  CHECK(id != exchange_id_for("m", user_only("hello "), sampling));
  CHECK(id != exchange_id_for("other", messages, sampling));

  SamplingConfig warmer = sampling;
  warmer.temperature = 1.0;
  CHECK(id != exchange_id_for("m", messages, warmer));

  SamplingConfig seeded = sampling;
  seeded.seed = 7;
  CHECK(id != exchange_id_for("m", messages, seeded));
}

TEST_CASE("mock backend matches exact, then substring, then sequence") {
  std::vector<ScriptEntry> script;
  ScriptEntry exact;
  exact.matcher = ScriptEntry::Matcher::exact_messages;
  exact.key_text = "user: hi\n";
  exact.response_text = "exact hit";
  script.push_back(exact);
  ScriptEntry sub;
  sub.matcher = ScriptEntry::Matcher::substring_of_last_user;
  sub.key_text = "hi";
  sub.response_text = "substring hit";
  script.push_back(sub);
  ScriptEntry seq;
  seq.matcher = ScriptEntry::Matcher::sequence_index;
  seq.key_index = 0;
  seq.response_text = "sequence hit";
  script.push_back(seq);

  MockBackend backend(script);
  SamplingConfig sampling;
  CHECK(backend.complete(user_only("hi"), sampling).response_text == "exact hit");
  CHECK(backend.complete(user_only("high noon"), sampling).response_text == "substring hit");
  CHECK(backend.complete(user_only("nope"), sampling).response_text == "sequence hit");
  CHECK_THROWS_AS(backend.complete(user_only("nope"), sampling), ScriptExhausted);
  CHECK(backend.calls() == 4);
}

TEST_CASE("substring entries are reusable, sequence entries are consumed in index order") {
  std::vector<ScriptEntry> script;
  ScriptEntry second;
  second.matcher = ScriptEntry::Matcher::sequence_index;
  second.key_index = 1;
  second.response_text = "second";
  ScriptEntry first;
  first.matcher = ScriptEntry::Matcher::sequence_index;
  first.key_index = 0;
  first.response_text = "first";
  ScriptEntry sub;
  sub.matcher = ScriptEntry::Matcher::substring_of_last_user;
  sub.key_text = "again";
  sub.response_text = "every time";
  script = {second, first, sub};  // scrambled on purpose

  MockBackend backend(script);
  SamplingConfig sampling;
  CHECK(backend.complete(user_only("again please"), sampling).response_text == "every time");
  CHECK(backend.complete(user_only("again please"), sampling).response_text == "every time");
  CHECK(backend.complete(user_only("x"), sampling).response_text == "first");
  CHECK(backend.complete(user_only("y"), sampling).response_text == "second");
}

TEST_CASE("mock backend rejects broken sequence numbering") {
  ScriptEntry a;
  a.matcher = ScriptEntry::Matcher::sequence_index;
  a.key_index = 0;
  ScriptEntry dup = a;
  CHECK_THROWS_AS(MockBackend({a, dup}), SchemaError);

  ScriptEntry gap;
  gap.matcher = ScriptEntry::Matcher::sequence_index;
  gap.key_index = 2;
  CHECK_THROWS_AS(MockBackend({a, gap}), SchemaError);
}

TEST_CASE("mock backend captures calls and fills token estimates") {
  ScriptEntry sub;
  sub.matcher = ScriptEntry::Matcher::substring_of_last_user;
  sub.key_text = "";
  sub.response_text = "four word reply here";
  MockBackend backend({sub});

  SamplingConfig sampling;
  sampling.temperature = 1.0;
  sampling.seed = 99;
  const ChatExchange ex = backend.complete(user_only("tell me things"), sampling);
  CHECK(ex.tokens_in == estimate_tokens("tell me things"));
  CHECK(ex.tokens_out == estimate_tokens("four word reply here"));
  CHECK_FALSE(ex.cached);
  CHECK(ex.id == exchange_id_for("mock", user_only("tell me things"), sampling));

  const auto captured = backend.captured();
  REQUIRE(captured.size() == 1);
  CHECK(captured[0].messages == user_only("tell me things"));
  CHECK(captured[0].sampling == sampling);
}

TEST_CASE("complete rejects message lists not ending in a user turn") {
  MockBackend backend({});
  SamplingConfig sampling;
  CHECK_THROWS_AS(backend.complete({}, sampling), std::invalid_argument);
  CHECK_THROWS_AS(backend.complete({assistant_message("hello")}, sampling),
                  std::invalid_argument);
}

TEST_CASE("script entries round trip through JSON") {
  ScriptEntry sub;
  sub.matcher = ScriptEntry::Matcher::substring_of_last_user;
  sub.key_text = "needle";
  sub.response_text = "reply";
  Json j = to_json(sub);
  CHECK(j["matcher"] == "substring_of_last_user");
  CHECK(j["key"] == "needle");
  ScriptEntry back = script_entry_from_json(j);
  CHECK(back.key_text == "needle");
  CHECK(back.response_text == "reply");

  ScriptEntry seq;
  seq.matcher = ScriptEntry::Matcher::sequence_index;
  seq.key_index = 3;
  seq.response_text = "later";
  back = script_entry_from_json(to_json(seq));
  CHECK(back.key_index == 3);

  CHECK_THROWS_AS(script_entry_from_json(Json{{"matcher", "substring_of_last_user"}}),
                  SchemaError);
  CHECK_THROWS_AS(script_entry_from_json(Json{{"matcher", "telepathy"},
                                              {"key", "x"},
                                              {"response", "y"}}),
                  SchemaError);
}

TEST_CASE("load_script accepts arrays, script objects and fixture files") {
  const auto dir = temp_dir("cfmad_script_test");
  const Json entry{{"matcher", "substring_of_last_user"}, {"key", "k"}, {"response", "r"}};

  {
    std::ofstream out(dir / "array.json");
    out << Json::array({entry}).dump();
  }
  CHECK(load_script(dir / "array.json").size() == 1);

  {
    std::ofstream out(dir / "object.json");
    out << Json{{"script", Json::array({entry, entry})}}.dump();
  }
  CHECK(load_script(dir / "object.json").size() == 2);

  {
    std::ofstream out(dir / "fixture.json");
    out << Json{{"name", "fixture"},
                {"script", Json::array({entry})},
                {"expected", Json::object()}}
               .dump();
  }
  CHECK(load_script(dir / "fixture.json").size() == 1);

  CHECK_THROWS_AS(load_script(dir / "missing.json"), IoError);
  {
    std::ofstream out(dir / "broken.json");
    out << "{not json";
  }
  CHECK_THROWS_AS(load_script(dir / "broken.json"), SchemaError);
  {
    std::ofstream out(dir / "shapeless.json");
    out << Json{{"responses", Json::array()}}.dump();
  }
  CHECK_THROWS_AS(load_script(dir / "shapeless.json"), SchemaError);
}

TEST_CASE("response cache stores, verifies keys and reports cacheability") {
  const auto dir = temp_dir("cfmad_cache_test");
  ResponseCache cache(dir);

  CHECK_FALSE(cache.lookup("id1", "key1").has_value());
  cache.store("id1", "key1", {"cached text", 10, 5});
  const auto hit = cache.lookup("id1", "key1");
  REQUIRE(hit.has_value());
  CHECK(hit->response_text == "cached text");
  CHECK(hit->tokens_in == 10);
  CHECK(hit->tokens_out == 5);

  // a key mismatch (hash collision) degrades to a miss
  CHECK_FALSE(cache.lookup("id1", "other-key").has_value());

  {
    std::ofstream out(dir / "id2.json");
    out << "{broken";
  }
  CHECK_FALSE(cache.lookup("id2", "key2").has_value());

  SamplingConfig greedy;
  greedy.temperature = 0.0;
  CHECK(ResponseCache::cacheable(greedy));
  SamplingConfig stochastic;
  stochastic.temperature = 1.0;
  CHECK_FALSE(ResponseCache::cacheable(stochastic));
  stochastic.seed = 4;
  CHECK(ResponseCache::cacheable(stochastic));
}

namespace {

/// In-process chat-completions stub with one route per behavior.
struct StubServer {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::atomic<int> flaky_hits{0};
  std::atomic<int> total_hits{0};
  std::string last_auth;
  std::string last_body;

  StubServer() {
    server.set_pre_routing_handler([this](const httplib::Request&, httplib::Response&) {
      ++total_hits;
      return httplib::Server::HandlerResponse::Unhandled;
    });
    server.Post("/ok/chat/completions",
                [this](const httplib::Request& req, httplib::Response& res) {
                  last_auth = req.get_header_value("Authorization");
                  last_body = req.body;
                  res.set_content(
                      Json{{"choices",
                            Json::array({Json{{"message", Json{{"content", "The answer is 4."}}}}})},
                           {"usage", Json{{"prompt_tokens", 7}, {"completion_tokens", 3}}}}
                          .dump(),
                      "application/json");
                });
    server.Post("/plain/chat/completions",
                [](const httplib::Request&, httplib::Response& res) {
                  res.set_content(
                      Json{{"choices",
                            Json::array({Json{{"message", Json{{"content", "ok reply"}}}}})}}
                          .dump(),
                      "application/json");
                });
    server.Post("/flaky/chat/completions",
                [this](const httplib::Request&, httplib::Response& res) {
                  if (flaky_hits.fetch_add(1) < 2) {
                    res.status = 429;
                  } else {
                    res.set_content(
                        Json{{"choices",
                              Json::array({Json{{"message", Json{{"content", "recovered"}}}}})}}
                            .dump(),
                        "application/json");
                  }
                });
    server.Post("/limited/chat/completions",
                [](const httplib::Request&, httplib::Response& res) { res.status = 429; });
    server.Post("/broken/chat/completions",
                [](const httplib::Request&, httplib::Response& res) { res.status = 500; });
    server.Post("/malformed/chat/completions",
                [](const httplib::Request&, httplib::Response& res) {
                  res.set_content("this is not json", "text/plain");
                });
    server.Post("/shapeless/chat/completions",
                [](const httplib::Request&, httplib::Response& res) {
                  res.set_content(Json{{"ok", true}}.dump(), "application/json");
                });
    port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }

  ~StubServer() {
    server.stop();
    thread.join();
  }

  HttpBackendConfig config(const std::string& prefix) const {
    HttpBackendConfig c;
    c.base_url = "http://127.0.0.1:" + std::to_string(port) + prefix;
    c.api_key_env = "";
    c.retry = {3, 1, 1.0};  // fast retries for tests
    return c;
  }
};

}  // namespace

TEST_CASE("http backend against a stub server") {
  StubServer stub;
  SamplingConfig sampling;
  sampling.temperature = 0.2;

  SUBCASE("success honors reported usage") {
    HttpBackend backend(stub.config("/ok"));
    const ChatExchange ex = backend.complete(user_only("2+2?"), sampling);
    CHECK(ex.response_text == "The answer is 4.");
    CHECK(ex.tokens_in == 7);
    CHECK(ex.tokens_out == 3);
    CHECK(ex.retries == 0);
    CHECK_FALSE(ex.cached);
  }

  SUBCASE("temperature, seed and max_tokens ride in the request body") {
    HttpBackendConfig config = stub.config("/ok");
    config.max_tokens = 128;
    HttpBackend backend(config);
    SamplingConfig seeded = sampling;
    seeded.seed = 42;
    backend.complete(user_only("ping"), seeded);
    const Json body = Json::parse(stub.last_body);
    CHECK(body["temperature"].get<double>() == doctest::Approx(0.2));
    CHECK(body["seed"].get<std::uint64_t>() == 42);
    CHECK(body["max_tokens"].get<int>() == 128);
    CHECK(body["messages"][0]["content"] == "ping");
  }

  SUBCASE("api key from the environment becomes a bearer header") {
    setenv("CFMAD_TEST_KEY", "sk-test-secret", 1);
    HttpBackendConfig config = stub.config("/ok");
    config.api_key_env = "CFMAD_TEST_KEY";
    HttpBackend backend(config);
    backend.complete(user_only("hello"), sampling);
    CHECK(stub.last_auth == "Bearer sk-test-secret");
  }

  SUBCASE("missing usage falls back to token estimates") {
    HttpBackend backend(stub.config("/plain"));
    const ChatExchange ex = backend.complete(user_only("hello there"), sampling);
    CHECK(ex.tokens_in == estimate_tokens("hello there"));
    CHECK(ex.tokens_out == estimate_tokens("ok reply"));
  }

  SUBCASE("429s are retried until the server recovers") {
    HttpBackendConfig config = stub.config("/flaky");
    config.retry = {5, 1, 1.0};
    HttpBackend backend(config);
    const ChatExchange ex = backend.complete(user_only("try"), sampling);
    CHECK(ex.response_text == "recovered");
    CHECK(ex.retries == 2);
  }

  SUBCASE("persistent 429 surfaces as RateLimited after max attempts") {
    HttpBackend backend(stub.config("/limited"));
    CHECK_THROWS_AS(backend.complete(user_only("try"), sampling), RateLimited);
    CHECK(stub.total_hits.load() == 3);
  }

  SUBCASE("5xx retries then surfaces as TransportError") {
    HttpBackend backend(stub.config("/broken"));
    CHECK_THROWS_AS(backend.complete(user_only("try"), sampling), TransportError);
    CHECK(stub.total_hits.load() == 3);
  }

  SUBCASE("404 fails immediately without retrying") {
    HttpBackend backend(stub.config("/nowhere"));
    CHECK_THROWS_AS(backend.complete(user_only("try"), sampling), TransportError);
    CHECK(stub.total_hits.load() == 1);
  }

  SUBCASE("non-JSON and shape-less bodies raise MalformedResponse") {
    HttpBackend malformed(stub.config("/malformed"));
    CHECK_THROWS_AS(malformed.complete(user_only("x"), sampling), MalformedResponse);
    HttpBackend shapeless(stub.config("/shapeless"));
    CHECK_THROWS_AS(shapeless.complete(user_only("x"), sampling), MalformedResponse);
  }

  SUBCASE("seeded repeats hit the response cache instead of the network") {
    HttpBackendConfig config = stub.config("/ok");
    config.cache_dir = temp_dir("cfmad_http_cache").string();
    HttpBackend backend(config);
    SamplingConfig seeded = sampling;
    seeded.seed = 11;
    const ChatExchange first = backend.complete(user_only("cache me"), seeded);
    CHECK_FALSE(first.cached);
    const int hits_after_first = stub.total_hits.load();
    const ChatExchange second = backend.complete(user_only("cache me"), seeded);
    CHECK(second.cached);
    CHECK(second.response_text == first.response_text);
    CHECK(stub.total_hits.load() == hits_after_first);
  }

  SUBCASE("unseeded stochastic calls bypass the cache") {
    HttpBackendConfig config = stub.config("/ok");
    config.cache_dir = temp_dir("cfmad_http_cache_hot").string();
    HttpBackend backend(config);
    SamplingConfig hot;
    hot.temperature = 1.0;
    backend.complete(user_only("sample"), hot);
    const ChatExchange again = backend.complete(user_only("sample"), hot);
    CHECK_FALSE(again.cached);
    CHECK(stub.total_hits.load() == 2);
  }
}

TEST_CASE("base url must carry a scheme") {
  HttpBackendConfig config;
  config.base_url = "localhost:8080/v1";
  CHECK_THROWS_AS(HttpBackend{config}, ConfigError);
}
