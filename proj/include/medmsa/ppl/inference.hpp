#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "medmsa/error.hpp"
#include "medmsa/ppl/program.hpp"
#include "medmsa/ppl/rng.hpp"
#include "medmsa/ppl/value.hpp"

namespace medmsa::ppl {

// A synthesized model that is broken (as opposed to merely rejecting):
// flip outside [0,1], non-positive gaussian sigma, type errors, ...
class RuntimeError : public Error {
 public:
  explicit RuntimeError(const std::string& message) : Error("RuntimeError", message) {}
};

class ContinuousUnsupported : public Error {
 public:
  ContinuousUnsupported() : Error("ContinuousUnsupported", "enumeration requires a discrete program (found gaussian)") {}
};

class PathExplosion : public Error {
 public:
  explicit PathExplosion(std::uint64_t cap)
      : Error("PathExplosion", "enumeration exceeded the path cap of " + std::to_string(cap)) {}
};

class ZeroEvidence : public Error {
 public:
  ZeroEvidence() : Error("ZeroEvidence", "no execution path satisfies the conditions") {}
};

// Source of random choices. The sampler draws from an Rng; the enumerator
// replays and extends a choice trace.
class ChoiceSource {
 public:
  virtual ~ChoiceSource() = default;
  virtual bool flip(double p) = 0;
  // `probs` is normalized and contains only strictly positive entries' indices
  // implicitly (zero-probability entries are never returned).
  virtual std::size_t categorical(std::span<const double> probs) = 0;
  virtual double gaussian(double mu, double sigma) = 0;
};

struct Outcome {
  enum class Status { Accepted, Rejected };
  Status status = Status::Rejected;
  // Query name → value, in query-record order. Empty when rejected.
  Record sample;
  std::uint64_t trace_choices = 0;

  bool accepted() const { return status == Status::Accepted; }
};

// Executes the model once against an arbitrary choice source.
Outcome execute(const Program& program, ChoiceSource& choices);

// One forward simulation with an owned random stream.
Outcome run_once(const Program& program, Rng& rng);

struct Budget {
  std::uint64_t max_proposals = 10'000'000;
  std::chrono::duration<double> wall_clock{90.0};

  bool operator==(const Budget&) const = default;
};

struct SampleSet {
  std::string model_id;
  std::vector<std::string> query_names;
  // Parallel to query_names; every list has accepted_count entries.
  std::vector<std::vector<Value>> values;
  std::uint64_t accepted_count = 0;
  std::uint64_t proposed_count = 0;
  std::uint64_t target = 0;
  bool budget_exhausted = false;
  double wall_time = 0;  // seconds
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;

  const std::vector<Value>* find(const std::string& query) const;
  // Relative frequency of each canonical value string for one query.
  std::map<std::string, double> frequencies(const std::string& query) const;
};

struct SampleOptions {
  std::uint64_t target_samples = 5000;
  Budget budget;
  std::uint64_t seed = 0;
  // Second component of the stream path (model index in a run).
  std::uint64_t stream = 0;
  std::string model_id;
};

// Calls run_once until `target_samples` are accepted or the budget runs out.
// Proposal i draws from Rng::stream(seed, {stream, i}), so results depend only
// on (program, target, proposal limit, seed, stream) unless the wall clock
// limit is hit. RuntimeError propagates.
SampleSet rejection_sample(const Program& program, const SampleOptions& options);

struct ExactDistribution {
  std::vector<std::string> query_names;
  // Parallel to query_names: canonical value string → probability.
  std::vector<std::map<std::string, double>> probabilities;
  // Total probability mass of accepted paths (the evidence).
  double evidence = 0;
  std::uint64_t paths = 0;

  const std::map<std::string, double>* find(const std::string& query) const;
};

struct EnumerateOptions {
  std::uint64_t path_cap = 10'000'000;
};

// Exhaustive expansion of all flip/categorical choices. Throws
// ContinuousUnsupported, PathExplosion, ZeroEvidence or RuntimeError.
// Results are independent of the order in which paths are visited: path
// weights multiply their factors in sorted order and sums are exact.
ExactDistribution enumerate(const Program& program, const EnumerateOptions& options = {});

// Total variation distance between two distributions over string keys.
double total_variation(const std::map<std::string, double>& p, const std::map<std::string, double>& q);

}  // namespace medmsa::ppl
