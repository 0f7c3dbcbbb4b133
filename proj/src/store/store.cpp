#include "medmsa/store/store.hpp"

#include <algorithm>
#include <ctime>

#include "medmsa/fsutil.hpp"
#include "medmsa/lm/client.hpp"
#include "medmsa/ppl/json_io.hpp"

namespace medmsa::store {
namespace fs = std::filesystem;
namespace {

constexpr const char* kCrockford = "0123456789ABCDEFGHJKMNPQRSTVWXYZ";

Json read_json(const fs::path& file) {
  Json j = Json::parse(read_file(file), nullptr, false);
  if (j.is_discarded()) throw Error("SchemaError", file.string() + " is not valid JSON");
  return j;
}

Json timestamps_json(const std::vector<std::pair<std::string, std::string>>& ts) {
  Json j = Json::object();
  for (const auto& [stage, t] : ts) j[stage] = t;
  return j;
}

fs::path candidate_dir(const fs::path& dir, std::size_t index) { return dir / "candidates" / std::to_string(index); }

}  // namespace

std::string make_run_id(std::uint64_t unix_ms, std::string_view entropy) {
  std::string id(26, '0');
  for (int i = 9; i >= 0; --i) {
    id[i] = kCrockford[unix_ms & 31];
    unix_ms >>= 5;
  }
  std::string hex = lm::fixture_key(lm::Stage::Canonicalize, std::string(entropy));
  // 80 bits = 20 hex digits = 16 base32 digits.
  for (int i = 0; i < 4; ++i) {
    std::uint64_t chunk = std::stoull(hex.substr(i * 5, 5), nullptr, 16);
    for (int j = 3; j >= 0; --j) {
      id[10 + i * 4 + j] = kCrockford[chunk & 31];
      chunk >>= 5;
    }
  }
  return id;
}

std::string iso8601(std::chrono::system_clock::time_point t) {
  std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string json_text(const Json& j) { return j.dump(2) + "\n"; }

void check_schema(const Json& j, const fs::path& file) {
  int found = j.is_object() ? j.value("schema_version", 0) : 0;
  if (found != kSchemaVersion) throw SchemaVersionMismatch(file, found);
}

RunManifest manifest_of(const RunResult& r) {
  RunManifest m;
  m.run_id = r.run.run_id;
  m.vignette = r.run.vignette;
  m.config = r.run.config;
  m.seed = r.run.seed;
  m.k = r.run.k;
  m.timestamps = r.run.timestamps;
  m.prompt_version = r.run.prompt_version;
  m.backend_id = r.backend_id;
  m.no_valid_models = r.no_valid_models;
  m.warnings = r.warnings;
  for (const auto& c : r.run.candidates)
    m.candidates.push_back(CandidateSummary{c.index, c.status, c.failed_stage, c.semantic_score,
                                            c.sample_set ? c.sample_set->accepted_count : 0});
  return m;
}

Json to_json(const RunManifest& m) {
  Json candidates = Json::array();
  for (const auto& c : m.candidates)
    candidates.push_back(Json{{"index", c.index},
                              {"status", synthesis::status_name(c.status)},
                              {"failed_stage", c.failed_stage},
                              {"semantic_score", c.semantic_score},
                              {"accepted_count", c.accepted_count}});
  return Json{{"schema_version", m.schema_version},
              {"run_id", m.run_id},
              {"vignette", synthesis::to_json(m.vignette)},
              {"k", m.k},
              {"seed", m.seed},
              {"config", synthesis::to_json(m.config)},
              {"prompt_version", m.prompt_version},
              {"backend_id", m.backend_id},
              {"timestamps", timestamps_json(m.timestamps)},
              {"no_valid_models", m.no_valid_models},
              {"warnings", m.warnings},
              {"candidates", candidates}};
}

RunManifest manifest_from_json(const Json& j) {
  try {
    RunManifest m;
    m.schema_version = j.at("schema_version").get<int>();
    m.run_id = j.at("run_id").get<std::string>();
    m.vignette = synthesis::vignette_from_json(j.at("vignette"));
    m.k = j.at("k").get<std::size_t>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.config = synthesis::config_from_json(j.at("config"));
    m.prompt_version = j.at("prompt_version").get<std::string>();
    m.backend_id = j.at("backend_id").get<std::string>();
    for (const auto& [stage, t] : j.at("timestamps").items()) m.timestamps.emplace_back(stage, t.get<std::string>());
    m.no_valid_models = j.at("no_valid_models").get<bool>();
    m.warnings = j.at("warnings").get<std::vector<std::string>>();
    for (const auto& c : j.at("candidates"))
      m.candidates.push_back(CandidateSummary{c.at("index").get<std::size_t>(),
                                              synthesis::parse_status(c.at("status").get<std::string>()),
                                              c.at("failed_stage").get<std::string>(),
                                              c.at("semantic_score").get<double>(),
                                              c.at("accepted_count").get<std::uint64_t>()});
    return m;
  } catch (const Json::exception& e) {
    throw Error("SchemaError", std::string("bad manifest: ") + e.what());
  }
}

fs::path run_dir(const fs::path& root, const std::string& run_id) { return root / run_id; }

fs::path persist_run(const fs::path& root, const RunResult& result) {
  if (result.run.run_id.empty()) throw Error("BadInput", "run has no run_id");
  fs::path dir = run_dir(root, result.run.run_id);
  if (fs::exists(dir / "manifest.json")) throw DuplicateRunId(result.run.run_id);
  std::error_code ec;
  fs::remove_all(dir, ec);

  for (const auto& c : result.run.candidates) {
    fs::path cdir = candidate_dir(dir, c.index);
    if (c.translation) write_file_atomic(cdir / "translation.json", json_text(synthesis::to_json(*c.translation)));
    if (c.sketch) write_file_atomic(cdir / "sketch.json", json_text(synthesis::to_json(*c.sketch)));
    if (!c.source.empty()) write_file_atomic(cdir / "model.medppl", c.source);
    if (!c.patched_source.empty()) write_file_atomic(cdir / "model.patched.medppl", c.patched_source);
    Json checks = synthesis::checks_json(c);
    checks["schema_version"] = kSchemaVersion;
    write_file_atomic(cdir / "checks.json", json_text(checks));
    if (c.sample_set) write_file_atomic(cdir / "samples.json", json_text(ppl::to_json(*c.sample_set)));
  }
  Json mapping = canonicalize::to_json(result.mapping);
  mapping["schema_version"] = kSchemaVersion;
  write_file_atomic(dir / "mapping.json", json_text(mapping));
  for (const auto& d : result.differentials) {
    Json j = differential::to_json(d);
    j["schema_version"] = kSchemaVersion;
    write_file_atomic(dir / "differential" / (d.query + ".json"), json_text(j));
  }
  write_file_atomic(dir / "manifest.json", json_text(to_json(manifest_of(result))));
  return dir;
}

RunManifest load_manifest(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw RunNotFound(dir.string());
  fs::path file = dir / "manifest.json";
  if (!fs::exists(file)) throw IncompleteRun(dir);
  Json j = read_json(file);
  check_schema(j, file);
  return manifest_from_json(j);
}

RunResult load_run(const fs::path& dir) {
  RunManifest m = load_manifest(dir);
  RunResult r;
  r.run.run_id = m.run_id;
  r.run.vignette = m.vignette;
  r.run.k = m.k;
  r.run.seed = m.seed;
  r.run.config = m.config;
  r.run.timestamps = m.timestamps;
  r.run.prompt_version = m.prompt_version;
  r.backend_id = m.backend_id;
  r.no_valid_models = m.no_valid_models;
  r.warnings = m.warnings;

  try {
    for (const auto& summary : m.candidates) {
      fs::path cdir = candidate_dir(dir, summary.index);
      synthesis::ModelCandidate c;
      Json checks = read_json(cdir / "checks.json");
      check_schema(checks, cdir / "checks.json");
      c.index = checks.at("index").get<std::size_t>();
      c.status = synthesis::parse_status(checks.at("status").get<std::string>());
      c.failed_stage = checks.at("failed_stage").get<std::string>();
      c.semantic_score = checks.at("semantic_score").get<double>();
      c.init_proposals = checks.at("init_proposals").get<std::uint64_t>();
      for (const auto& d : checks.at("diagnostics")) c.diagnostics.push_back(synthesis::diagnostic_from_json(d));
      if (fs::exists(cdir / "translation.json"))
        c.translation = synthesis::translation_from_json(read_json(cdir / "translation.json"));
      if (fs::exists(cdir / "sketch.json")) c.sketch = synthesis::sketch_from_json(read_json(cdir / "sketch.json"));
      if (fs::exists(cdir / "model.medppl")) c.source = read_file(cdir / "model.medppl");
      if (fs::exists(cdir / "model.patched.medppl")) c.patched_source = read_file(cdir / "model.patched.medppl");
      if (fs::exists(cdir / "samples.json"))
        c.sample_set = ppl::sample_set_from_json(read_json(cdir / "samples.json"));
      r.run.candidates.push_back(std::move(c));
    }
    Json mapping = read_json(dir / "mapping.json");
    check_schema(mapping, dir / "mapping.json");
    r.mapping = canonicalize::mapping_from_json(mapping);
    if (!m.no_valid_models) {
      for (std::size_t i = 0; i < m.vignette.queries.size(); ++i) {
        fs::path file = dir / "differential" / (synthesis::query_key(i) + ".json");
        Json d = read_json(file);
        check_schema(d, file);
        r.differentials.push_back(differential::distribution_from_json(d));
      }
    }
  } catch (const Json::exception& e) {
    throw Error("SchemaError", "bad run file in " + dir.string() + ": " + e.what());
  }
  return r;
}

RunListing list_runs(const fs::path& root) {
  RunListing out;
  if (!fs::is_directory(root)) return out;
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory()) dirs.push_back(entry.path());
  std::sort(dirs.begin(), dirs.end());
  for (const auto& dir : dirs) {
    try {
      out.runs.push_back(load_manifest(dir));
    } catch (const Error& e) {
      out.warnings.push_back(dir.filename().string() + ": " + e.code() + ": " + e.what());
    }
  }
  return out;
}

}  // namespace medmsa::store
