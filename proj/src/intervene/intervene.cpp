#include "medmsa/intervene/intervene.hpp"

#include <algorithm>
#include <mutex>

#include "medmsa/fsutil.hpp"
#include "medmsa/ppl/json_io.hpp"
#include "medmsa/runner.hpp"
#include "medmsa/store/store.hpp"

namespace medmsa::intervene {
namespace fs = std::filesystem;
namespace {

bool is_version_id(const std::string& id) {
  return id.size() > 1 && id[0] == 'v' && std::all_of(id.begin() + 1, id.end(), ::isdigit);
}

bool is_candidate_id(const std::string& id) {
  return !id.empty() && id.size() < 6 && std::all_of(id.begin(), id.end(), ::isdigit);
}

Json read_json(const fs::path& file) {
  Json j = Json::parse(read_file(file), nullptr, false);
  if (j.is_discarded()) throw Error("SchemaError", file.string() + " is not valid JSON");
  return j;
}

fs::path version_dir(const fs::path& run_dir, const std::string& id) { return run_dir / "interventions" / id; }

// Claims the next free v<n> directory.
std::string allocate_version(const fs::path& run_dir) {
  static std::mutex mu;
  std::lock_guard lock(mu);
  fs::create_directories(run_dir / "interventions");
  for (int n = 1;; ++n) {
    std::string id = "v" + std::to_string(n);
    if (fs::create_directory(version_dir(run_dir, id))) return id;
  }
}

std::vector<differential::DifferentialDistribution> single(const synthesis::Vignette& v, const ppl::SampleSet* set) {
  std::vector<differential::DifferentialDistribution> out;
  for (std::size_t q = 0; q < v.queries.size(); ++q) {
    differential::DifferentialDistribution d;
    d.query = synthesis::query_key(q);
    if (set && set->accepted_count > 0) d = differential::ensemble({set}, d.query);
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<differential::DifferentialDistribution> ensemble_with(
    const synthesis::Vignette& v, std::vector<std::pair<std::size_t, ppl::SampleSet>> sets, std::size_t slot,
    const ppl::SampleSet* replacement) {
  sets.erase(std::remove_if(sets.begin(), sets.end(), [&](const auto& p) { return p.first == slot; }), sets.end());
  if (replacement) sets.emplace_back(slot, *replacement);
  std::sort(sets.begin(), sets.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<const ppl::SampleSet*> ptrs;
  for (const auto& [i, s] : sets)
    if (s.accepted_count > 0) ptrs.push_back(&s);
  if (ptrs.empty()) return single(v, nullptr);
  return ensemble_all(v, sets);
}

ppl::SampleSet canonical(ppl::SampleSet s, const canonicalize::CategoryMapping& m) {
  for (const auto& q : s.query_names) s = canonicalize::apply_mapping(s, m, q);
  return s;
}

Json dists_json(const std::vector<differential::DifferentialDistribution>& ds) {
  Json out = Json::array();
  for (const auto& d : ds) out.push_back(differential::to_json(d));
  return out;
}

std::vector<differential::DifferentialDistribution> dists_from(const Json& j) {
  std::vector<differential::DifferentialDistribution> out;
  for (const auto& d : j) out.push_back(differential::distribution_from_json(d));
  return out;
}

// State of the model an edit starts from.
struct Base {
  std::size_t root_index = 0;
  std::vector<std::string> lineage;
  std::string source;
  std::optional<ppl::SampleSet> samples;  // raw
  canonicalize::CategoryMapping mapping;
};

Base resolve(const fs::path& run_dir, const store::RunResult& run, const std::string& model_id) {
  Base b;
  if (is_candidate_id(model_id)) {
    std::size_t index = std::stoul(model_id);
    auto it = std::find_if(run.run.candidates.begin(), run.run.candidates.end(),
                           [&](const auto& c) { return c.index == index; });
    if (it == run.run.candidates.end()) throw ModelNotFound(model_id);
    if (!it->valid() || !it->sample_set) throw ModelNotCompiled(model_id);
    b.root_index = index;
    b.lineage = {model_id};
    b.source = it->patched_source;
    b.samples = it->sample_set;
    b.mapping = run.mapping;
    return b;
  }
  if (!is_version_id(model_id)) throw ModelNotFound(model_id);
  fs::path dir = version_dir(run_dir, model_id);
  if (!fs::exists(dir / "intervention.json")) throw ModelNotFound(model_id);
  auto prior = intervention_from_json(read_json(dir / "intervention.json"));
  b.root_index = prior.root_index;
  b.lineage = prior.lineage;
  b.source = read_file(dir / "model.medppl");
  if (fs::exists(dir / "samples.json")) b.samples = ppl::sample_set_from_json(read_json(dir / "samples.json"));
  b.mapping = canonicalize::mapping_from_json(read_json(dir / "mapping.json"));
  return b;
}

std::uint64_t derived_seed(std::uint64_t run_seed, const std::string& model_id, const ppl::Edit& edit) {
  Json j{{"seed", run_seed}, {"model", model_id}, {"edit", to_json(edit)}};
  return std::stoull(lm::fixture_key(lm::Stage::SynthesizeCode, j.dump()).substr(0, 15), nullptr, 16);
}

}  // namespace

ppl::Edit edit_from_json(const Json& j) {
  if (!j.is_object()) throw Error("BadEdit", "edit must be a JSON object");
  ppl::Edit e;
  try {
    e.kind = ppl::parse_kind(j.at("kind").get<std::string>());
    e.note = j.value("note", "");
    const Json target = j.value("target", Json());
    const Json payload = j.value("payload", Json());
    auto need_index = [&] {
      if (target.is_number_unsigned()) return target.get<std::size_t>();
      if (target.is_object() && target.contains("index")) return target.at("index").get<std::size_t>();
      throw Error("BadEdit", std::string(ppl::kind_name(e.kind)) + " needs target.index");
    };
    auto need_expression = [&] {
      if (!payload.is_string() || payload.get<std::string>().empty())
        throw Error("BadEdit", std::string(ppl::kind_name(e.kind)) + " needs an expression payload");
      return payload.get<std::string>();
    };
    switch (e.kind) {
      case ppl::Edit::Kind::ReplaceCondition:
        e.index = need_index();
        e.expression = need_expression();
        break;
      case ppl::Edit::Kind::AddCondition:
        e.expression = need_expression();
        break;
      case ppl::Edit::Kind::RemoveCondition:
        e.index = need_index();
        break;
      case ppl::Edit::Kind::ReplaceNumericLiteral: {
        if (!target.is_object() || !target.contains("span") || target.at("span").size() != 2)
          throw Error("BadEdit", "ReplaceNumericLiteral needs target.span [begin, end]");
        e.span_begin = target.at("span")[0].get<std::size_t>();
        e.span_end = target.at("span")[1].get<std::size_t>();
        if (!payload.is_number()) throw Error("BadEdit", "ReplaceNumericLiteral needs a numeric payload");
        e.number = payload.get<double>();
        break;
      }
    }
  } catch (const Json::exception& ex) {
    throw Error("BadEdit", std::string("malformed edit: ") + ex.what());
  }
  return e;
}

Json to_json(const ppl::Edit& e) {
  Json j{{"kind", ppl::kind_name(e.kind)}};
  switch (e.kind) {
    case ppl::Edit::Kind::ReplaceCondition:
      j["target"] = Json{{"index", e.index}};
      j["payload"] = e.expression;
      break;
    case ppl::Edit::Kind::AddCondition:
      j["target"] = nullptr;
      j["payload"] = e.expression;
      break;
    case ppl::Edit::Kind::RemoveCondition:
      j["target"] = Json{{"index", e.index}};
      j["payload"] = nullptr;
      break;
    case ppl::Edit::Kind::ReplaceNumericLiteral:
      j["target"] = Json{{"span", {e.span_begin, e.span_end}}};
      j["payload"] = e.number;
      break;
  }
  j["note"] = e.note;
  return j;
}

Json to_json(const InterventionResult& r) {
  return Json{{"schema_version", store::kSchemaVersion},
              {"base_model_id", r.base_model_id},
              {"new_model_version_id", r.new_model_version_id},
              {"root_index", r.root_index},
              {"lineage", r.lineage},
              {"edit", to_json(r.edit)},
              {"seed", r.seed},
              {"stream", r.stream},
              {"accepted_count", r.accepted_count},
              {"proposed_count", r.proposed_count},
              {"budget_exhausted", r.budget_exhausted},
              {"created", r.created},
              {"before", dists_json(r.before)},
              {"after", dists_json(r.after)},
              {"before_ensemble", dists_json(r.before_ensemble)},
              {"after_ensemble", dists_json(r.after_ensemble)}};
}

InterventionResult intervention_from_json(const Json& j) {
  try {
    InterventionResult r;
    r.base_model_id = j.at("base_model_id").get<std::string>();
    r.new_model_version_id = j.at("new_model_version_id").get<std::string>();
    r.root_index = j.at("root_index").get<std::size_t>();
    r.lineage = j.at("lineage").get<std::vector<std::string>>();
    r.edit = edit_from_json(j.at("edit"));
    r.seed = j.at("seed").get<std::uint64_t>();
    r.stream = j.at("stream").get<std::uint64_t>();
    r.accepted_count = j.at("accepted_count").get<std::uint64_t>();
    r.proposed_count = j.at("proposed_count").get<std::uint64_t>();
    r.budget_exhausted = j.at("budget_exhausted").get<bool>();
    r.created = j.at("created").get<std::string>();
    r.before = dists_from(j.at("before"));
    r.after = dists_from(j.at("after"));
    r.before_ensemble = dists_from(j.at("before_ensemble"));
    r.after_ensemble = dists_from(j.at("after_ensemble"));
    return r;
  } catch (const Json::exception& e) {
    throw Error("SchemaError", std::string("bad intervention JSON: ") + e.what());
  }
}

InterventionResult intervene(const fs::path& run_dir, const std::string& model_id, const ppl::Edit& edit,
                             const InterveneOptions& options) {
  auto run = store::load_run(run_dir);
  Base base = resolve(run_dir, run, model_id);
  const auto& vignette = run.run.vignette;
  const auto& config = run.run.config;

  ppl::Program edited = ppl::apply_edit(ppl::parse(base.source), edit);

  InterventionResult r;
  r.base_model_id = model_id;
  r.root_index = base.root_index;
  r.edit = edit;
  r.seed = options.seed.value_or(derived_seed(run.run.seed, model_id, edit));
  r.stream = (std::uint64_t{2} << 32) + base.root_index;

  ppl::SampleOptions o;
  o.target_samples = config.samples;
  o.budget = config.sample_budget;
  o.seed = r.seed;
  o.stream = r.stream;
  ppl::SampleSet after;
  try {
    after = ppl::rejection_sample(edited, o);
  } catch (const ppl::RuntimeError& e) {
    throw ppl::EditProducesInvalidProgram({ppl::diagnostic_from(e)});
  }
  if (config.deterministic_timing) after.wall_time = 0;
  r.accepted_count = after.accepted_count;
  r.proposed_count = after.proposed_count;
  r.budget_exhausted = after.accepted_count == 0;

  // Extend the mapping for categories the edited model introduces.
  canonicalize::CategoryMapping mapping = base.mapping;
  std::set<std::string> raws;
  for (const auto& q : after.query_names)
    for (const auto& c : canonicalize::categories({&after}, q)) raws.insert(c);
  std::set<std::string> fresh;
  for (const auto& c : raws) {
    try {
      mapping.canonical(c);
    } catch (const canonicalize::UnmappedCategory&) {
      fresh.insert(c);
    }
  }
  if (!fresh.empty()) {
    if (options.lm) {
      mapping = canonicalize::extend_mapping(mapping, fresh, *options.lm, options.canonicalize_prompt, options.overrides);
    } else {
      for (const auto& c : fresh)
        mapping.entries[c] = canonicalize::MappingEntry{canonicalize::normalize(c), canonicalize::Provenance::Identity};
    }
  }

  std::optional<ppl::SampleSet> before_set;
  if (base.samples) before_set = canonical(*base.samples, mapping);
  ppl::SampleSet after_set = canonical(after, mapping);
  auto others = canonical_sets(run.run, mapping);

  r.before = single(vignette, before_set ? &*before_set : nullptr);
  r.after = single(vignette, &after_set);
  r.before_ensemble = ensemble_with(vignette, others, base.root_index, before_set ? &*before_set : nullptr);
  r.after_ensemble = ensemble_with(vignette, others, base.root_index, &after_set);
  r.created = store::iso8601(config.deterministic_timing ? std::chrono::system_clock::time_point{}
                                                         : std::chrono::system_clock::now());

  r.new_model_version_id = allocate_version(run_dir);
  r.lineage = base.lineage;
  r.lineage.push_back(r.new_model_version_id);
  after.model_id = r.new_model_version_id;

  fs::path dir = version_dir(run_dir, r.new_model_version_id);
  write_file_atomic(dir / "model.medppl", edited.source());
  write_file_atomic(dir / "samples.json", store::json_text(ppl::to_json(after)));
  Json m = canonicalize::to_json(mapping);
  m["schema_version"] = store::kSchemaVersion;
  write_file_atomic(dir / "mapping.json", store::json_text(m));
  write_file_atomic(dir / "intervention.json", store::json_text(to_json(r)));
  return r;
}

std::vector<InterventionResult> list_interventions(const fs::path& run_dir) {
  store::load_manifest(run_dir);
  std::vector<std::pair<int, InterventionResult>> found;
  fs::path root = run_dir / "interventions";
  if (fs::is_directory(root)) {
    for (const auto& entry : fs::directory_iterator(root)) {
      std::string id = entry.path().filename().string();
      if (!is_version_id(id) || !fs::exists(entry.path() / "intervention.json")) continue;
      found.emplace_back(std::stoi(id.substr(1)), intervention_from_json(read_json(entry.path() / "intervention.json")));
    }
  }
  std::sort(found.begin(), found.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<InterventionResult> out;
  for (auto& [n, r] : found) out.push_back(std::move(r));
  return out;
}

InterventionResult load_intervention(const fs::path& run_dir, const std::string& version_id) {
  fs::path file = version_dir(run_dir, version_id) / "intervention.json";
  if (!is_version_id(version_id) || !fs::exists(file)) throw ModelNotFound(version_id);
  Json j = read_json(file);
  store::check_schema(j, file);
  return intervention_from_json(j);
}

std::string model_source(const fs::path& run_dir, const std::string& model_id) {
  if (is_version_id(model_id)) {
    fs::path file = version_dir(run_dir, model_id) / "model.medppl";
    if (!fs::exists(version_dir(run_dir, model_id) / "intervention.json")) throw ModelNotFound(model_id);
    return read_file(file);
  }
  auto manifest = store::load_manifest(run_dir);
  if (!is_candidate_id(model_id)) throw ModelNotFound(model_id);
  std::size_t index = std::stoul(model_id);
  if (index == 0 || index > manifest.k) throw ModelNotFound(model_id);
  fs::path dir = run_dir / "candidates" / model_id;
  if (fs::exists(dir / "model.patched.medppl")) return read_file(dir / "model.patched.medppl");
  if (fs::exists(dir / "model.medppl")) return read_file(dir / "model.medppl");
  return "";
}

std::vector<ppl::Edit> edit_chain(const fs::path& run_dir, const std::string& version_id) {
  std::vector<ppl::Edit> out;
  auto leaf = load_intervention(run_dir, version_id);
  for (std::size_t i = 1; i < leaf.lineage.size(); ++i)
    out.push_back(load_intervention(run_dir, leaf.lineage[i]).edit);
  return out;
}

}  // namespace medmsa::intervene
