#include "medmsa/ppl/json_io.hpp"

namespace medmsa::ppl {

Json to_json(const Value& v) {
  if (v.is_bool()) return v.as_bool();
  if (v.is_number()) return v.as_number();
  if (v.is_string()) return v.as_string();
  if (v.is_list()) {
    Json out = Json::array();
    for (const auto& x : v.as_list()) out.push_back(to_json(x));
    return out;
  }
  if (v.is_record()) {
    Json out = Json::object();
    for (const auto& [k, x] : v.as_record()) out[k] = to_json(x);
    return out;
  }
  throw Error("NotSerializable", std::string("cannot serialize a ") + v.type_name());
}

Value value_from_json(const Json& j) {
  if (j.is_boolean()) return Value(j.get<bool>());
  if (j.is_number()) return Value(j.get<double>());
  if (j.is_string()) return Value(j.get<std::string>());
  if (j.is_array()) {
    List l;
    for (const auto& x : j) l.push_back(value_from_json(x));
    return Value(std::move(l));
  }
  if (j.is_object()) {
    Record r;
    for (const auto& [k, x] : j.items()) r.emplace_back(k, value_from_json(x));
    return Value(std::move(r));
  }
  throw Error("NotSerializable", "null is not a MedPPL value");
}

Json to_json(const SampleSet& s) {
  Json queries = Json::object();
  for (std::size_t q = 0; q < s.query_names.size(); ++q) {
    Json values = Json::array();
    for (const auto& v : s.values[q]) values.push_back(to_json(v));
    queries[s.query_names[q]] = std::move(values);
  }
  return Json{{"model_id", s.model_id},
              {"seed", s.seed},
              {"stream", s.stream},
              {"target", s.target},
              {"accepted_count", s.accepted_count},
              {"proposed_count", s.proposed_count},
              {"budget_exhausted", s.budget_exhausted},
              {"wall_time", s.wall_time},
              {"queries", std::move(queries)}};
}

SampleSet sample_set_from_json(const Json& j) {
  SampleSet s;
  s.model_id = j.at("model_id").get<std::string>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.stream = j.at("stream").get<std::uint64_t>();
  s.target = j.at("target").get<std::uint64_t>();
  s.accepted_count = j.at("accepted_count").get<std::uint64_t>();
  s.proposed_count = j.at("proposed_count").get<std::uint64_t>();
  s.budget_exhausted = j.at("budget_exhausted").get<bool>();
  s.wall_time = j.at("wall_time").get<double>();
  for (const auto& [name, values] : j.at("queries").items()) {
    s.query_names.push_back(name);
    auto& out = s.values.emplace_back();
    for (const auto& v : values) out.push_back(value_from_json(v));
    if (out.size() != s.accepted_count)
      throw Error("SchemaError", "query '" + name + "' has " + std::to_string(out.size()) + " values, expected " +
                                     std::to_string(s.accepted_count));
  }
  return s;
}

Json to_json(const ExactDistribution& d) {
  Json queries = Json::object();
  for (std::size_t q = 0; q < d.query_names.size(); ++q) {
    Json probs = Json::object();
    for (const auto& [k, p] : d.probabilities[q]) probs[k] = p;
    queries[d.query_names[q]] = std::move(probs);
  }
  return Json{{"evidence", d.evidence}, {"paths", d.paths}, {"queries", std::move(queries)}};
}

}  // namespace medmsa::ppl
