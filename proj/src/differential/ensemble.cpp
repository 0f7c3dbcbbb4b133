#include "medmsa/differential/ensemble.hpp"

#include <algorithm>
#include <cstdio>

#include "medmsa/canonicalize/mapping.hpp"
#include "medmsa/ppl/value.hpp"

namespace medmsa::differential {

double DifferentialDistribution::coverage() const {
  double sum = 0;
  for (const auto& e : entries) sum += e.probability;
  return sum;
}

const DifferentialEntry* DifferentialDistribution::find(const std::string& category) const {
  for (const auto& e : entries)
    if (e.category == category) return &e;
  return nullptr;
}

double DifferentialDistribution::probability(const std::string& category) const {
  const auto* e = find(category);
  return e ? e->probability : 0.0;
}

std::map<std::string, Rational> model_distribution(const ppl::SampleSet& set, const std::string& query) {
  std::map<std::string, Rational> out;
  const auto* values = set.find(query);
  if (!values || values->empty()) return out;
  std::map<std::string, std::uint64_t> counts;
  for (const auto& v : *values) ++counts[ppl::canonical_string(v)];
  for (const auto& [k, n] : counts) out[k] = Rational(n, values->size());
  return out;
}

DifferentialDistribution ensemble(const std::vector<const ppl::SampleSet*>& sets, const std::string& query) {
  DifferentialDistribution d;
  d.query = query;
  std::map<std::string, Rational> sum;
  std::map<std::string, std::size_t> support;
  for (const auto* s : sets) {
    auto dist = model_distribution(*s, query);
    if (dist.empty()) continue;
    ++d.n_models;
    d.total_samples += s->find(query)->size();
    for (const auto& [k, p] : dist) {
      sum[k] += p;
      ++support[k];
    }
  }
  if (d.n_models == 0) throw NoValidModels();

  std::vector<std::pair<std::string, Rational>> exact;
  for (auto& [k, p] : sum) exact.emplace_back(k, p / d.n_models);
  std::sort(exact.begin(), exact.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  for (const auto& [k, p] : exact)
    d.entries.push_back(DifferentialEntry{k, p.convert_to<double>(), support[k], canonicalize::is_catch_all(k)});
  return d;
}

DifferentialDistribution top_n(const DifferentialDistribution& dist, std::size_t n) {
  if (n == 0) throw Error("BadInput", "top_n needs n >= 1");
  DifferentialDistribution out = dist;
  if (out.entries.size() > n) out.entries.resize(n);
  return out;
}

Json to_json(const DifferentialDistribution& d) {
  Json entries = Json::array();
  for (const auto& e : d.entries)
    entries.push_back(Json{{"category", e.category},
                           {"probability", e.probability},
                           {"support", e.support},
                           {"is_catch_all", e.is_catch_all}});
  return Json{{"query", d.query},
              {"n_models", d.n_models},
              {"total_samples", d.total_samples},
              {"coverage", d.coverage()},
              {"entries", entries}};
}

DifferentialDistribution distribution_from_json(const Json& j) {
  try {
    DifferentialDistribution d;
    d.query = j.at("query").get<std::string>();
    d.n_models = j.at("n_models").get<std::size_t>();
    d.total_samples = j.at("total_samples").get<std::uint64_t>();
    for (const auto& e : j.at("entries"))
      d.entries.push_back(DifferentialEntry{e.at("category").get<std::string>(), e.at("probability").get<double>(),
                                            e.at("support").get<std::size_t>(), e.at("is_catch_all").get<bool>()});
    return d;
  } catch (const Json::exception& e) {
    throw Error("SchemaError", std::string("bad distribution JSON: ") + e.what());
  }
}

std::string render_bars(const DifferentialDistribution& d, std::size_t width) {
  std::size_t label = 0;
  for (const auto& e : d.entries) label = std::max(label, e.category.size() + (e.is_catch_all ? 2 : 0));
  std::string out;
  for (const auto& e : d.entries) {
    std::string name = e.category + (e.is_catch_all ? " *" : "");
    auto len = static_cast<std::size_t>(e.probability * static_cast<double>(width) + 0.5);
    char pct[32];
    std::snprintf(pct, sizeof pct, "%6.2f%%", e.probability * 100);
    out += name + std::string(label - name.size() + 2, ' ') + std::string(len, '#') +
           std::string(width - std::min(len, width) + 1, ' ') + pct + "  (" + std::to_string(e.support) + "/" +
           std::to_string(d.n_models) + " models)\n";
  }
  char cov[64];
  std::snprintf(cov, sizeof cov, "coverage %.2f%% of %zu models", d.coverage() * 100, d.n_models);
  out += cov;
  if (std::any_of(d.entries.begin(), d.entries.end(), [](const auto& e) { return e.is_catch_all; }))
    out += "; * catch-all category";
  return out + "\n";
}

}  // namespace medmsa::differential
