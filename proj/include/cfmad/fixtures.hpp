#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cfmad/backend.hpp"
#include "cfmad/core.hpp"

namespace cfmad {

/// A self-contained test scenario: the scripted backend replies plus the
/// values a run against them must produce.
struct Fixture {
  std::string name;
  std::vector<ScriptEntry> script;
  Json expected;
};

/// Locates the fixtures directory: explicit path, then $CFMAD_FIXTURES_DIR,
/// then ./fixtures, then the source-tree copy compiled into test builds.
std::filesystem::path resolve_fixtures_dir(const std::string& explicit_path = "");

/// Loads <dir>/<name>.json and validates its {name, script, expected}
/// shape. Throws SchemaError on malformed content, IoError when missing.
Fixture load_fixture(const std::string& name, const std::string& dir = "");

}  // namespace cfmad
