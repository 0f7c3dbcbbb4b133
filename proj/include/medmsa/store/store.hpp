#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "medmsa/canonicalize/mapping.hpp"
#include "medmsa/differential/ensemble.hpp"
#include "medmsa/error.hpp"
#include "medmsa/json.hpp"
#include "medmsa/synthesis/types.hpp"

namespace medmsa::store {

inline constexpr int kSchemaVersion = 1;

class IncompleteRun : public Error {
 public:
  explicit IncompleteRun(const std::filesystem::path& dir)
      : Error("IncompleteRun", dir.string() + " has no manifest.json (interrupted or in progress)") {}
};

class DuplicateRunId : public Error {
 public:
  explicit DuplicateRunId(const std::string& run_id) : Error("DuplicateRunId", "run " + run_id + " already exists") {}
};

class SchemaVersionMismatch : public Error {
 public:
  SchemaVersionMismatch(const std::filesystem::path& file, int found)
      : Error("SchemaVersionMismatch", file.string() + " has schema_version " + std::to_string(found) +
                                           ", expected " + std::to_string(kSchemaVersion)) {}
};

class RunNotFound : public Error {
 public:
  explicit RunNotFound(const std::string& what) : Error("RunNotFound", "no run at " + what) {}
};

// Everything a completed run persists.
struct RunResult {
  synthesis::SynthesisRun run;
  canonicalize::CategoryMapping mapping;
  // One per vignette query; empty when no model is valid.
  std::vector<differential::DifferentialDistribution> differentials;
  bool no_valid_models = false;
  std::string backend_id;
  std::vector<std::string> warnings;
};

struct CandidateSummary {
  std::size_t index = 0;
  synthesis::CandidateStatus status = synthesis::CandidateStatus::ParseFailed;
  std::string failed_stage;
  double semantic_score = 0;
  std::uint64_t accepted_count = 0;

  bool operator==(const CandidateSummary&) const = default;
};

struct RunManifest {
  int schema_version = kSchemaVersion;
  std::string run_id;
  synthesis::Vignette vignette;
  synthesis::SynthesisConfig config;
  std::uint64_t seed = 0;
  std::size_t k = 0;
  std::vector<std::pair<std::string, std::string>> timestamps;
  std::string prompt_version;
  std::string backend_id;
  std::vector<CandidateSummary> candidates;
  bool no_valid_models = false;
  std::vector<std::string> warnings;
};

struct RunListing {
  // Complete runs, sorted by run_id.
  std::vector<RunManifest> runs;
  // Directories skipped (incomplete, foreign, wrong schema) with the reason.
  std::vector<std::string> warnings;
};

// 26-character Crockford base32 id: 48-bit millisecond timestamp followed by
// 80 bits taken from SHA-256 of `entropy`. Sorts by time.
std::string make_run_id(std::uint64_t unix_ms, std::string_view entropy);

// "YYYY-MM-DDTHH:MM:SSZ".
std::string iso8601(std::chrono::system_clock::time_point t);

// Pretty JSON text with a trailing newline; the on-disk format of every file.
std::string json_text(const Json& j);

RunManifest manifest_of(const RunResult& r);
Json to_json(const RunManifest& m);
RunManifest manifest_from_json(const Json& j);

std::filesystem::path run_dir(const std::filesystem::path& root, const std::string& run_id);

// Writes runs/<run_id>/..., manifest last. A leftover directory without a
// manifest is replaced. Throws DuplicateRunId or IoError.
std::filesystem::path persist_run(const std::filesystem::path& root, const RunResult& result);

// Throws RunNotFound, IncompleteRun, SchemaVersionMismatch.
RunManifest load_manifest(const std::filesystem::path& dir);
RunResult load_run(const std::filesystem::path& dir);
RunListing list_runs(const std::filesystem::path& root);

// Checks schema_version of a JSON document read from `file`.
void check_schema(const Json& j, const std::filesystem::path& file);

}  // namespace medmsa::store
