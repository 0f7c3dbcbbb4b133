#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "medmsa/error.hpp"
#include "medmsa/json.hpp"
#include "medmsa/ppl/inference.hpp"

namespace medmsa::differential {

using Rational = boost::multiprecision::cpp_rational;

class NoValidModels : public Error {
 public:
  NoValidModels() : Error("NoValidModels", "no valid model has samples to ensemble") {}
};

struct DifferentialEntry {
  std::string category;
  double probability = 0;
  // Number of models that sampled this category at least once.
  std::size_t support = 0;
  bool is_catch_all = false;

  bool operator==(const DifferentialEntry&) const = default;
};

struct DifferentialDistribution {
  std::string query;
  // Sorted by probability descending, then category ascending.
  std::vector<DifferentialEntry> entries;
  std::size_t n_models = 0;
  std::uint64_t total_samples = 0;

  bool operator==(const DifferentialDistribution&) const = default;

  // Sum of entry probabilities; below 1 after truncation.
  double coverage() const;
  const DifferentialEntry* find(const std::string& category) const;
  double probability(const std::string& category) const;
};

// Exact relative frequencies of one query's canonical value strings.
std::map<std::string, Rational> model_distribution(const ppl::SampleSet& set, const std::string& query);

// Equal-weight average of the per-model distributions. Sets must already be
// canonicalized; sets without accepted samples are skipped. Throws
// NoValidModels when nothing remains.
DifferentialDistribution ensemble(const std::vector<const ppl::SampleSet*>& sets, const std::string& query);

// First n entries; probabilities are not renormalized.
DifferentialDistribution top_n(const DifferentialDistribution& dist, std::size_t n);

Json to_json(const DifferentialDistribution& d);
DifferentialDistribution distribution_from_json(const Json& j);

// Horizontal text bars, one line per entry, with a coverage footer.
std::string render_bars(const DifferentialDistribution& d, std::size_t width = 40);

}  // namespace medmsa::differential
