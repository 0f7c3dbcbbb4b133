#include "medmsa/synthesis/types.hpp"

#include "medmsa/ppl/json_io.hpp"

namespace medmsa::synthesis {
namespace {

std::vector<std::string> strings(const Json& j) {
  std::vector<std::string> out;
  for (const auto& x : j) out.push_back(x.get<std::string>());
  return out;
}

Json budget_json(const ppl::Budget& b) {
  return Json{{"max_proposals", b.max_proposals}, {"wall_clock_seconds", b.wall_clock.count()}};
}

ppl::Budget budget_from(const Json& j, ppl::Budget fallback) {
  fallback.max_proposals = j.value("max_proposals", fallback.max_proposals);
  fallback.wall_clock = std::chrono::duration<double>(j.value("wall_clock_seconds", fallback.wall_clock.count()));
  return fallback;
}

}  // namespace

Vignette vignette_from_json(const Json& j) {
  Vignette v;
  try {
    v.id = j.value("id", "");
    v.sentences = strings(j.at("sentences"));
    v.queries = strings(j.at("queries"));
  } catch (const Json::exception& e) {
    throw Error("BadVignette", std::string("malformed vignette: ") + e.what());
  }
  if (v.sentences.empty()) throw Error("BadVignette", "vignette has no sentences");
  if (v.queries.empty()) throw Error("BadVignette", "vignette has no queries");
  return v;
}

Json to_json(const Vignette& v) { return Json{{"id", v.id}, {"sentences", v.sentences}, {"queries", v.queries}}; }

std::string query_key(std::size_t i) { return "query" + std::to_string(i + 1); }

const char* status_name(CandidateStatus s) {
  switch (s) {
    case CandidateStatus::Compiled: return "Compiled";
    case CandidateStatus::ParseFailed: return "ParseFailed";
    case CandidateStatus::ValidateFailed: return "ValidateFailed";
    case CandidateStatus::BudgetFailed: return "BudgetFailed";
    case CandidateStatus::SemanticRejected: return "SemanticRejected";
  }
  return "";
}

CandidateStatus parse_status(const std::string& name) {
  for (auto s : {CandidateStatus::Compiled, CandidateStatus::ParseFailed, CandidateStatus::ValidateFailed,
                 CandidateStatus::BudgetFailed, CandidateStatus::SemanticRejected})
    if (name == status_name(s)) return s;
  throw Error("SchemaError", "unknown candidate status '" + name + "'");
}

bool ModelCandidate::valid() const {
  return status == CandidateStatus::Compiled && sample_set && sample_set->accepted_count > 0;
}

std::vector<const ModelCandidate*> SynthesisRun::valid_models() const {
  std::vector<const ModelCandidate*> out;
  for (const auto& c : candidates)
    if (c.valid()) out.push_back(&c);
  return out;
}

Json to_json(const SynthesisConfig& c) {
  return Json{{"translations", c.translations},
              {"sketches", c.sketches},
              {"code_completions", c.code_completions},
              {"semantic_threshold", c.semantic_threshold},
              {"samples", c.samples},
              {"init_budget", budget_json(c.init_budget)},
              {"sample_budget", budget_json(c.sample_budget)},
              {"share_translation", c.share_translation},
              {"deterministic_timing", c.deterministic_timing},
              {"backend", c.backend},
              {"ensemble_weighting", c.ensemble_weighting}};
}

SynthesisConfig config_from_json(const Json& j) {
  SynthesisConfig c;
  c.translations = j.value("translations", c.translations);
  c.sketches = j.value("sketches", c.sketches);
  c.code_completions = j.value("code_completions", c.code_completions);
  c.semantic_threshold = j.value("semantic_threshold", c.semantic_threshold);
  c.samples = j.value("samples", c.samples);
  if (j.contains("init_budget")) c.init_budget = budget_from(j.at("init_budget"), c.init_budget);
  if (j.contains("sample_budget")) c.sample_budget = budget_from(j.at("sample_budget"), c.sample_budget);
  c.share_translation = j.value("share_translation", c.share_translation);
  c.deterministic_timing = j.value("deterministic_timing", c.deterministic_timing);
  c.threads = j.value("threads", c.threads);
  c.backend = j.value("backend", c.backend);
  c.ensemble_weighting = j.value("ensemble_weighting", c.ensemble_weighting);
  if (c.translations == 0 || c.sketches == 0 || c.code_completions == 0)
    throw Error("BadConfig", "candidate counts must be at least 1");
  if (c.ensemble_weighting != "equal")
    throw Error("BadConfig", "only 'equal' ensemble weighting is implemented");
  return c;
}

Json to_json(const Translation& t) {
  return Json{{"condition_statements", t.condition_statements},
              {"query_expressions", t.query_expressions},
              {"required_functions", t.required_functions},
              {"skipped_sentences", t.skipped_sentences},
              {"lm_score", t.lm_score},
              {"chosen_index", t.chosen_index},
              {"raw", t.raw}};
}

Translation translation_from_json(const Json& j) {
  Translation t;
  t.condition_statements = strings(j.at("condition_statements"));
  t.query_expressions = strings(j.at("query_expressions"));
  for (const auto& s : strings(j.at("required_functions"))) t.required_functions.insert(s);
  t.skipped_sentences = strings(j.at("skipped_sentences"));
  t.lm_score = j.at("lm_score").get<double>();
  t.chosen_index = j.at("chosen_index").get<std::size_t>();
  t.raw = j.at("raw").get<std::string>();
  return t;
}

Json to_json(const Sketch& s) {
  Json trace = Json::array();
  for (const auto& e : s.concept_trace) trace.push_back(Json{{"variable", e.variable}, {"depends_on", e.depends_on}});
  return Json{{"prose", s.prose},
              {"concept_trace", std::move(trace)},
              {"lm_score", s.lm_score},
              {"chosen_index", s.chosen_index},
              {"raw", s.raw}};
}

Sketch sketch_from_json(const Json& j) {
  Sketch s;
  s.prose = j.at("prose").get<std::string>();
  for (const auto& e : j.at("concept_trace"))
    s.concept_trace.push_back(TraceEntry{e.at("variable").get<std::string>(), strings(e.at("depends_on"))});
  s.lm_score = j.at("lm_score").get<double>();
  s.chosen_index = j.at("chosen_index").get<std::size_t>();
  s.raw = j.at("raw").get<std::string>();
  return s;
}

Json to_json(const ppl::Diagnostic& d) {
  return Json{{"code", d.code}, {"message", d.message}, {"line", d.line}, {"column", d.column}};
}

ppl::Diagnostic diagnostic_from_json(const Json& j) {
  return ppl::Diagnostic{j.at("code").get<std::string>(), j.at("message").get<std::string>(), j.at("line").get<int>(),
                         j.at("column").get<int>()};
}

Json checks_json(const ModelCandidate& c) {
  Json diags = Json::array();
  for (const auto& d : c.diagnostics) diags.push_back(to_json(d));
  return Json{{"index", c.index},
              {"status", status_name(c.status)},
              {"failed_stage", c.failed_stage},
              {"semantic_score", c.semantic_score},
              {"init_proposals", c.init_proposals},
              {"valid", c.valid()},
              {"diagnostics", std::move(diags)}};
}

}  // namespace medmsa::synthesis
