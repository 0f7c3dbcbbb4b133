#include "medmsa/runner.hpp"

#include <random>

#include "medmsa/canonicalize/mapping.hpp"
#include "medmsa/differential/ensemble.hpp"

namespace medmsa {

std::filesystem::path default_fixture_dir() { return synthesis::default_data_dir() / "fixtures"; }

std::shared_ptr<lm::Backend> make_backend(const std::string& kind, const std::filesystem::path& fixture_dir,
                                          const lm::HttpConfig& http) {
  if (kind == "replay")
    return std::make_shared<lm::FixtureBackend>(fixture_dir, lm::FixtureBackend::Mode::Replay,
                                                std::make_shared<lm::ForbiddenBackend>());
  if (kind == "record")
    return std::make_shared<lm::FixtureBackend>(fixture_dir, lm::FixtureBackend::Mode::Record,
                                                std::make_shared<lm::HttpBackend>(http));
  if (kind == "http") return std::make_shared<lm::HttpBackend>(http);
  throw Error("BadConfig", "unknown backend '" + kind + "' (expected replay, record or http)");
}

std::vector<std::pair<std::size_t, ppl::SampleSet>> canonical_sets(const synthesis::SynthesisRun& run,
                                                                    const canonicalize::CategoryMapping& mapping) {
  std::vector<std::pair<std::size_t, ppl::SampleSet>> out;
  for (const auto* c : run.valid_models()) {
    if (!c->sample_set) continue;
    ppl::SampleSet s = *c->sample_set;
    for (const auto& q : s.query_names) s = canonicalize::apply_mapping(s, mapping, q);
    out.emplace_back(c->index, std::move(s));
  }
  return out;
}

std::vector<differential::DifferentialDistribution> ensemble_all(
    const synthesis::Vignette& vignette, const std::vector<std::pair<std::size_t, ppl::SampleSet>>& sets) {
  std::vector<const ppl::SampleSet*> ptrs;
  for (const auto& [i, s] : sets) ptrs.push_back(&s);
  std::vector<differential::DifferentialDistribution> out;
  for (std::size_t q = 0; q < vignette.queries.size(); ++q)
    out.push_back(differential::ensemble(ptrs, synthesis::query_key(q)));
  return out;
}

std::string run_id_for(const RunRequest& request, const synthesis::PromptSet& prompts, const std::string& backend_id,
                       std::chrono::system_clock::time_point started) {
  Json entropy{{"vignette", synthesis::to_json(request.vignette)},
               {"k", request.k},
               {"seed", request.seed},
               {"config", synthesis::to_json(request.config)},
               {"prompt_version", prompts.version},
               {"backend", backend_id}};
  // Live runs also mix in fresh randomness so repeated identical requests get distinct ids.
  if (!request.config.deterministic_timing) entropy["nonce"] = std::random_device{}();
  auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(started.time_since_epoch()).count();
  return store::make_run_id(static_cast<std::uint64_t>(ms), entropy.dump());
}

store::RunResult execute_run(const RunRequest& request, lm::Client& lm, const synthesis::PromptSet& prompts,
                             const synthesis::ProgressFn& progress, const WallClock& clock) {
  const bool frozen = request.config.deterministic_timing;
  auto now = [&] { return frozen ? std::chrono::system_clock::time_point{} : clock(); };

  auto started = now();
  store::RunResult result;
  result.run = synthesis::run_pipeline(request.vignette, request.k, request.seed, request.config, lm, prompts, progress);
  result.backend_id = lm.backend_id();
  auto synthesized = now();

  std::vector<const ppl::SampleSet*> valid;
  for (const auto* c : result.run.valid_models())
    if (c->sample_set && c->sample_set->accepted_count > 0) valid.push_back(&*c->sample_set);

  if (valid.empty()) {
    result.no_valid_models = true;
    result.warnings.push_back("NoValidModels: no candidate compiled and sampled; the ensemble is empty");
  } else {
    std::set<std::string> raws;
    for (std::size_t q = 0; q < request.vignette.queries.size(); ++q)
      for (const auto& r : canonicalize::categories(valid, synthesis::query_key(q))) raws.insert(r);
    if (!raws.empty()) result.mapping = canonicalize::build_mapping(raws, lm, prompts.canonicalize, request.overrides);
    result.warnings.insert(result.warnings.end(), result.mapping.warnings.begin(), result.mapping.warnings.end());
    result.differentials = ensemble_all(request.vignette, canonical_sets(result.run, result.mapping));
  }
  auto completed = now();

  result.run.timestamps = {{"started", store::iso8601(started)},
                           {"synthesized", store::iso8601(synthesized)},
                           {"completed", store::iso8601(completed)}};
  result.run.run_id = request.run_id.empty() ? run_id_for(request, prompts, result.backend_id, started) : request.run_id;
  return result;
}

}  // namespace medmsa
