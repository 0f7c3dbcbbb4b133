#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "medmsa/error.hpp"
#include "medmsa/lm/client.hpp"
#include "medmsa/synthesis/types.hpp"

namespace medmsa::synthesis {

class NoParsableCandidate : public Error {
 public:
  explicit NoParsableCandidate(const std::string& message) : Error("NoParsableCandidate", message) {}
};

class DelimitersMissing : public Error {
 public:
  explicit DelimitersMissing(const std::string& message) : Error("DelimitersMissing", message) {}
};

// Data directory holding prompts/, vignettes/, fixtures/: $MEDMSA_DATA_DIR
// or the source tree's data/.
std::filesystem::path default_data_dir();

struct PromptSet {
  std::string translate;
  std::string sketch;
  std::string code;
  std::string score;
  std::string canonicalize;
  // Short content hash of all templates.
  std::string version;

  // Reads <dir>/{translate,sketch,code,score,canonicalize}.txt; leading
  // `#` header lines are metadata and are dropped.
  static PromptSet load(const std::filesystem::path& dir);
};

// Replaces {{name}} placeholders; throws Error("PromptError") if a
// placeholder has no value.
std::string fill(const std::string& tmpl, const std::vector<std::pair<std::string, std::string>>& values);

std::string format_sentences(const Vignette& v);
std::string format_queries(const Vignette& v);
// CONDITIONS/QUERIES block text of a translation.
std::string format_translation(const Translation& t);
std::string format_sketch(const Sketch& s);

// Parsers for LM output. They return nullopt and set `why` when the text is
// unusable.
std::optional<Translation> parse_translation(const std::string& text, const Vignette& vignette, std::string* why = nullptr);
std::optional<Sketch> parse_sketch(const std::string& text, const Translation& translation, std::string* why = nullptr);
// Value after the last `SCORE:`, clamped to [0,1]; 0 when missing.
double parse_score(const std::string& text);
// Raw text between <START_WEBPPL_MODEL> and <END_WEBPPL_MODEL>; throws
// DelimitersMissing.
std::string extract_program(const std::string& text);

// Uncomments `// condition(...)` lines at the model's top level.
std::string patch_conditions(const std::string& source);

// LM sample indices: candidate slot j (0-based) uses
// j * n .. j * n + n - 1 for a stage that draws n samples.
Translation translate(const Vignette& vignette, lm::Client& lm, const PromptSet& prompts, std::size_t n,
                      std::uint64_t first_index);
Sketch sketch(const Vignette& vignette, const Translation& translation, lm::Client& lm, const PromptSet& prompts,
              std::size_t n, std::uint64_t first_index);
std::string synthesize_program(const Vignette& vignette, const Translation& translation, const Sketch& sketch,
                               lm::Client& lm, const PromptSet& prompts, std::uint64_t sample_index);

struct CheckResult {
  CandidateStatus status = CandidateStatus::ParseFailed;
  double semantic_score = 0;
  std::string failed_stage;
  std::vector<ppl::Diagnostic> diagnostics;
  std::uint64_t init_proposals = 0;
};

// Semantic score, then parse + validate (including query1..queryN keys),
// then the initialization budget. The first failure decides the status.
CheckResult check_candidate(const std::string& source, const Vignette& vignette, lm::Client& lm,
                            const PromptSet& prompts, const SynthesisConfig& config, std::uint64_t seed,
                            std::uint64_t stream);

// Progress events: (1-based candidate index, stage). Stages in order:
// translate, sketch, code, checks, sampling, done.
using ProgressFn = std::function<void(std::size_t, const std::string&)>;

// Runs k independent candidates. LM transport errors (missing fixtures,
// unreachable backend) abort the whole run; candidate failures do not.
SynthesisRun run_pipeline(const Vignette& vignette, std::size_t k, std::uint64_t seed, const SynthesisConfig& config,
                          lm::Client& lm, const PromptSet& prompts, const ProgressFn& progress = {});

// RNG stream ids for a candidate's initialization check and sampling.
std::uint64_t init_stream(std::size_t candidate_index);
std::uint64_t sample_stream(std::size_t candidate_index);

}  // namespace medmsa::synthesis
