#pragma once

#include "medmsa/json.hpp"
#include "medmsa/ppl/inference.hpp"
#include "medmsa/ppl/value.hpp"

namespace medmsa::ppl {

// Data values only; functions and undefined throw Error("NotSerializable").
Json to_json(const Value& v);
Value value_from_json(const Json& j);

// {model_id, seed, stream, target, accepted_count, proposed_count,
//  budget_exhausted, wall_time, queries: {name: [values...]}}
Json to_json(const SampleSet& s);
SampleSet sample_set_from_json(const Json& j);

// {evidence, paths, queries: {name: {value-string: probability}}}
Json to_json(const ExactDistribution& d);

}  // namespace medmsa::ppl
