#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "medmsa/canonicalize/mapping.hpp"
#include "medmsa/differential/ensemble.hpp"
#include "medmsa/error.hpp"
#include "medmsa/json.hpp"
#include "medmsa/lm/client.hpp"
#include "medmsa/ppl/edit.hpp"

namespace medmsa::intervene {

class ModelNotFound : public Error {
 public:
  explicit ModelNotFound(const std::string& model_id) : Error("ModelNotFound", "no model '" + model_id + "' in this run") {}
};

class ModelNotCompiled : public Error {
 public:
  explicit ModelNotCompiled(const std::string& model_id)
      : Error("ModelNotCompiled", "model '" + model_id + "' did not compile; only compiled models can be edited") {}
};

// Edit JSON: {"kind": "...", "target": {"index": i} | {"span": [b, e]},
// "payload": "expression" | number, "note": "..."}. Throws Error("BadEdit").
ppl::Edit edit_from_json(const Json& j);
Json to_json(const ppl::Edit& e);

struct InterventionResult {
  // "<i>" for a synthesized candidate, "v<n>" for an earlier intervention.
  std::string base_model_id;
  std::string new_model_version_id;
  std::size_t root_index = 0;
  // Model ids from the synthesized root to the new version.
  std::vector<std::string> lineage;
  ppl::Edit edit;
  // Per query: the edited model alone, and the run ensemble with the model
  // in the root candidate's slot.
  std::vector<differential::DifferentialDistribution> before;
  std::vector<differential::DifferentialDistribution> after;
  std::vector<differential::DifferentialDistribution> before_ensemble;
  std::vector<differential::DifferentialDistribution> after_ensemble;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  std::uint64_t accepted_count = 0;
  std::uint64_t proposed_count = 0;
  // No sample accepted within the budget; `after` is empty.
  bool budget_exhausted = false;
  std::string created;
};

Json to_json(const InterventionResult& r);
InterventionResult intervention_from_json(const Json& j);

struct InterveneOptions {
  // Derived from the run seed, the base model and the edit when absent.
  std::optional<std::uint64_t> seed;
  // Used to extend the category mapping when the edited model produces new
  // categories; without it new categories map to their normalized form.
  lm::Client* lm = nullptr;
  std::string canonicalize_prompt;
  std::map<std::string, std::string> overrides;
};

// Applies `edit` to the model, reruns sampling with the run's sample target
// and budget, and persists the result under interventions/<version>/.
// Throws ModelNotFound, ModelNotCompiled, EditTargetMissing or
// EditProducesInvalidProgram (also for runtime errors while sampling).
InterventionResult intervene(const std::filesystem::path& run_dir, const std::string& model_id, const ppl::Edit& edit,
                             const InterveneOptions& options = {});

// Completed interventions, ordered by version number.
std::vector<InterventionResult> list_interventions(const std::filesystem::path& run_dir);
InterventionResult load_intervention(const std::filesystem::path& run_dir, const std::string& version_id);

// Source of a candidate (patched source) or of an intervention version.
std::string model_source(const std::filesystem::path& run_dir, const std::string& model_id);

// Edits from the root candidate to `version_id`, in application order.
std::vector<ppl::Edit> edit_chain(const std::filesystem::path& run_dir, const std::string& version_id);

}  // namespace medmsa::intervene
