#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "medmsa/error.hpp"
#include "medmsa/json.hpp"
#include "medmsa/lm/client.hpp"
#include "medmsa/ppl/inference.hpp"

namespace medmsa::canonicalize {

class UnmappedCategory : public Error {
 public:
  explicit UnmappedCategory(const std::string& category)
      : Error("UnmappedCategory", "category '" + category + "' is not in the mapping") {}
};

enum class Provenance { LM, Override, Identity };

const char* provenance_name(Provenance p);
Provenance parse_provenance(const std::string& name);

struct MappingEntry {
  std::string canonical;
  Provenance provenance = Provenance::Identity;

  bool operator==(const MappingEntry&) const = default;
};

struct CategoryMapping {
  // Keyed by the raw category exactly as the models produced it.
  std::map<std::string, MappingEntry> entries;
  std::string source_prompt_hash;
  // Set when the LM answer was not a JSON object of strings.
  bool lm_unparsable = false;
  std::vector<std::string> warnings;

  bool operator==(const CategoryMapping&) const = default;

  // Canonical name of a raw value (exact key first, then its normalized
  // form). Throws UnmappedCategory.
  const std::string& canonical(const std::string& raw) const;
  std::set<std::string> targets() const;
};

// Lowercase, underscores to spaces, whitespace runs collapsed, trimmed.
std::string normalize(const std::string& raw);

// The models' catch-all bucket ("other").
bool is_catch_all(const std::string& canonical);

// Raw string values of one query across sample sets.
std::set<std::string> categories(const std::vector<const ppl::SampleSet*>& sets, const std::string& query);

// Overrides file: JSON object raw → canonical. Keys and values are
// normalized on load.
std::map<std::string, std::string> load_overrides(const std::filesystem::path& path);

// Asks the LM for a synonym mapping over the normalized categories, then
// resolves chains so the result is idempotent. LM targets outside the input
// set are ignored (Identity, with a warning). Overrides are applied last and
// may name new categories. "heart attack" is never remapped by the LM.
CategoryMapping build_mapping(const std::set<std::string>& raw_categories, lm::Client& lm,
                              const std::string& prompt_template, const std::map<std::string, std::string>& overrides);

// Replaces every string value of `query` by its canonical name; other values
// pass through.
ppl::SampleSet apply_mapping(const ppl::SampleSet& set, const CategoryMapping& mapping, const std::string& query);

// Adds raws not yet covered, keeping every existing entry unchanged.
CategoryMapping extend_mapping(const CategoryMapping& base, const std::set<std::string>& raw_categories,
                               lm::Client& lm, const std::string& prompt_template,
                               const std::map<std::string, std::string>& overrides);

Json to_json(const CategoryMapping& m);
CategoryMapping mapping_from_json(const Json& j);

}  // namespace medmsa::canonicalize
