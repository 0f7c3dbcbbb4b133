#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "medmsa/lm/client.hpp"
#include "medmsa/lm/http_backend.hpp"
#include "medmsa/store/store.hpp"
#include "medmsa/synthesis/pipeline.hpp"

namespace medmsa {

struct RunRequest {
  synthesis::Vignette vignette;
  std::size_t k = 20;
  std::uint64_t seed = 0;
  synthesis::SynthesisConfig config;
  std::map<std::string, std::string> overrides;
  // Used as-is when set; otherwise derived by run_id_for.
  std::string run_id;
};

using WallClock = std::function<std::chrono::system_clock::time_point()>;

// Replay fixtures live under <data>/fixtures.
std::filesystem::path default_fixture_dir();

// "replay" (fixtures, network forbidden), "record" (HTTP, answers written to
// fixtures) or "http". Throws Error("BadConfig") for anything else.
std::shared_ptr<lm::Backend> make_backend(const std::string& kind, const std::filesystem::path& fixture_dir,
                                          const lm::HttpConfig& http = {});

// ULID-style id from the start time and the run inputs. Live runs (no
// deterministic_timing) also mix in a random nonce.
std::string run_id_for(const RunRequest& request, const synthesis::PromptSet& prompts, const std::string& backend_id,
                       std::chrono::system_clock::time_point started);

// Synthesizes, canonicalizes and ensembles. With deterministic_timing the
// clock is ignored and all timestamps are the epoch. The run id depends only
// on the timestamp and the inputs.
store::RunResult execute_run(const RunRequest& request, lm::Client& lm, const synthesis::PromptSet& prompts,
                             const synthesis::ProgressFn& progress = {},
                             const WallClock& clock = std::chrono::system_clock::now);

// Valid models' sample sets with every categorical value canonicalized, in
// candidate order. Pairs of (candidate index, set).
std::vector<std::pair<std::size_t, ppl::SampleSet>> canonical_sets(const synthesis::SynthesisRun& run,
                                                                    const canonicalize::CategoryMapping& mapping);

std::vector<differential::DifferentialDistribution> ensemble_all(
    const synthesis::Vignette& vignette, const std::vector<std::pair<std::size_t, ppl::SampleSet>>& sets);

}  // namespace medmsa
