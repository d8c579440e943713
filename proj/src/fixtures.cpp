#include "cfmad/fixtures.hpp"

#include <cstdlib>
#include <fstream>

namespace cfmad {

std::filesystem::path resolve_fixtures_dir(const std::string& explicit_path) {
  if (!explicit_path.empty()) return explicit_path;
  if (const char* env = std::getenv("CFMAD_FIXTURES_DIR")) {
    if (*env != '\0') return env;
  }
  if (std::filesystem::is_directory("fixtures")) return "fixtures";
#ifdef CFMAD_SOURCE_DIR
  const auto source = std::filesystem::path(CFMAD_SOURCE_DIR) / "fixtures";
  if (std::filesystem::is_directory(source)) return source;
#endif
  throw ConfigError("cannot locate fixtures directory; set CFMAD_FIXTURES_DIR");
}

Fixture load_fixture(const std::string& name, const std::string& dir) {
  const auto path = resolve_fixtures_dir(dir) / (name + ".json");
  std::ifstream in(path);
  if (!in) throw IoError("cannot open fixture " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw SchemaError(path.string(), "", std::string("invalid JSON: ") + e.what());
  }

  Fixture fixture;
  if (!j.is_object()) throw SchemaError(path.string(), "", "expected a JSON object");
  if (!j.contains("name") || !j["name"].is_string()) {
    throw SchemaError(path.string(), "name", "missing or not a string");
  }
  fixture.name = j["name"].get<std::string>();
  if (fixture.name != name) {
    throw SchemaError(path.string(), "name",
                      "fixture names itself '" + fixture.name + "' but lives in " + name +
                          ".json");
  }
  if (!j.contains("script") || !j["script"].is_array()) {
    throw SchemaError(path.string(), "script", "missing or not an array");
  }
  for (const auto& entry : j["script"]) {
    fixture.script.push_back(script_entry_from_json(entry));
  }
  if (!j.contains("expected") || !j["expected"].is_object()) {
    throw SchemaError(path.string(), "expected", "missing or not an object");
  }
  fixture.expected = j["expected"];
  return fixture;
}

}  // namespace cfmad
