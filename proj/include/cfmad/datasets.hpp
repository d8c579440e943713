#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cfmad/core.hpp"

namespace cfmad {

class UnknownDataset : public Error {
 public:
  explicit UnknownDataset(const std::string& name)
      : Error("unknown dataset '" + name +
              "' (expected hover, boolq, cosmosqa, commonsenseqa, gsm8k, svamp, multiarith or "
              "canonical)") {}
};

/// Where and how to load one dataset split. `name` selects the upstream
/// schema; "canonical" reads the artifact's own JSONL question format.
struct DatasetSpec {
  std::string name;
  std::string path;
  TaskKind task_kind = TaskKind::multi_choice;  // filled from `name` on load
  std::string split = "validation";
  std::optional<int> hop_filter;    // Hover only
  std::optional<int> sample_n;
  std::uint64_t sample_seed = 0;
};

/// The task each dataset name maps to. Throws UnknownDataset.
TaskKind dataset_task_kind(const std::string& name);

/// Loads, validates and — when requested — hop-filters and subsamples
/// questions, in file order. Every returned Question passes validate_question.
std::vector<Question> load(const DatasetSpec& spec);

/// Uniform sample of n questions without replacement, preserving relative
/// order; deterministic under seed.
std::vector<Question> subsample(const std::vector<Question>& questions, int n,
                                std::uint64_t seed);

/// Writes questions in the canonical JSONL schema, one object per line.
void write_canonical(const std::vector<Question>& questions, const std::filesystem::path& path);

/// Minimal RFC 4180 reader: quoted fields, doubled-quote escapes, embedded
/// commas and newlines. Returns all rows including the header.
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path);

}  // namespace cfmad
