#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "medmsa/json.hpp"
#include "medmsa/ppl/inference.hpp"
#include "medmsa/ppl/validate.hpp"

namespace medmsa::synthesis {

struct Vignette {
  std::string id;
  std::vector<std::string> sentences;
  std::vector<std::string> queries;

  bool operator==(const Vignette&) const = default;
};

// Throws Error("BadVignette") on missing fields or empty lists.
Vignette vignette_from_json(const Json& j);
Json to_json(const Vignette& v);

// Query i (0-based) of a vignette binds to this record key in the model.
std::string query_key(std::size_t i);

struct Translation {
  // Full `condition(...)` statement texts, in sentence order.
  std::vector<std::string> condition_statements;
  std::vector<std::string> query_expressions;
  std::set<std::string> required_functions;
  // Sentences the translation judged non-conditioning.
  std::vector<std::string> skipped_sentences;
  double lm_score = 0;
  std::size_t chosen_index = 0;
  std::string raw;

  bool operator==(const Translation&) const = default;
};

struct TraceEntry {
  std::string variable;
  std::vector<std::string> depends_on;

  bool operator==(const TraceEntry&) const = default;
};

struct Sketch {
  std::string prose;
  std::vector<TraceEntry> concept_trace;
  double lm_score = 0;
  std::size_t chosen_index = 0;
  std::string raw;

  bool operator==(const Sketch&) const = default;
};

enum class CandidateStatus { Compiled, ParseFailed, ValidateFailed, BudgetFailed, SemanticRejected };

const char* status_name(CandidateStatus s);
CandidateStatus parse_status(const std::string& name);

struct ModelCandidate {
  std::size_t index = 0;  // 1-based
  std::optional<Translation> translation;
  std::optional<Sketch> sketch;
  std::string source;
  std::string patched_source;
  double semantic_score = 0;
  CandidateStatus status = CandidateStatus::ParseFailed;
  // Stage that produced the status: translate, sketch, code, semantic,
  // parse, validate, init, sample.
  std::string failed_stage;
  std::vector<ppl::Diagnostic> diagnostics;
  // Proposals used by the initialization check.
  std::uint64_t init_proposals = 0;
  std::optional<ppl::SampleSet> sample_set;

  bool valid() const;
};

struct SynthesisConfig {
  std::size_t translations = 4;
  std::size_t sketches = 3;
  std::size_t code_completions = 1;
  double semantic_threshold = 0.3;
  std::uint64_t samples = 5000;
  // Initialization check: accept at least one sample within this budget.
  ppl::Budget init_budget{1'000'000, std::chrono::duration<double>(90.0)};
  ppl::Budget sample_budget{10'000'000, std::chrono::duration<double>(600.0)};
  bool share_translation = false;
  // Record fixed timestamps and zero wall times (replay runs), so that run
  // directories are byte-identical across executions.
  bool deterministic_timing = false;
  std::size_t threads = 0;  // 0: hardware concurrency
  std::string backend = "replay";
  std::string ensemble_weighting = "equal";

  bool operator==(const SynthesisConfig&) const = default;
};

Json to_json(const SynthesisConfig& c);
SynthesisConfig config_from_json(const Json& j);

struct SynthesisRun {
  std::string run_id;
  Vignette vignette;
  std::size_t k = 0;
  std::uint64_t seed = 0;
  SynthesisConfig config;
  std::vector<ModelCandidate> candidates;
  // Stage name → ISO-8601 UTC timestamp.
  std::vector<std::pair<std::string, std::string>> timestamps;
  std::string prompt_version;

  std::vector<const ModelCandidate*> valid_models() const;
};

Json to_json(const Translation& t);
Translation translation_from_json(const Json& j);
Json to_json(const Sketch& s);
Sketch sketch_from_json(const Json& j);
Json to_json(const ppl::Diagnostic& d);
ppl::Diagnostic diagnostic_from_json(const Json& j);
// Status, scores and diagnostics of a candidate (checks.json).
Json checks_json(const ModelCandidate& c);

}  // namespace medmsa::synthesis
