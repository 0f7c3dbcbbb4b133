// medmsa command line: run, differential, edit, sample, enumerate, serve.
#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include "medmsa/canonicalize/mapping.hpp"
#include "medmsa/differential/ensemble.hpp"
#include "medmsa/fsutil.hpp"
#include "medmsa/intervene/intervene.hpp"
#include "medmsa/lm/scripted.hpp"
#include "medmsa/ppl/inference.hpp"
#include "medmsa/ppl/program.hpp"
#include "medmsa/ppl/validate.hpp"
#include "medmsa/runner.hpp"
#include "medmsa/service/service.hpp"
#include "medmsa/store/store.hpp"

namespace fs = std::filesystem;
using namespace medmsa;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kRuntime = 2;
constexpr int kNoValidModels = 3;

bool g_json = false;

// Diagnostics go to stderr, as JSON lines with --json.
void report(const std::string& level, const std::string& code, const std::string& message, Json details = {}) {
  if (g_json) {
    Json j{{"level", level}, {"code", code}, {"message", message}};
    if (!details.is_null()) j["details"] = std::move(details);
    std::cerr << j.dump() << "\n";
  } else {
    std::cerr << level << ": " << (code.empty() ? "" : code + ": ") << message << "\n";
  }
}

void report_error(const std::exception& e) {
  Json details;
  if (const auto* missing = dynamic_cast<const lm::FixtureMissing*>(&e)) details = Json{{"paths", missing->paths()}};
  if (const auto* invalid = dynamic_cast<const ppl::EditProducesInvalidProgram*>(&e)) {
    details = Json::array();
    for (const auto& d : invalid->diagnostics()) details.push_back(Json{{"code", d.code}, {"message", d.message}});
  }
  const auto* err = dynamic_cast<const Error*>(&e);
  report("error", err ? err->code() : "Internal", e.what(), details);
}

ppl::Program load_program(const fs::path& file) {
  auto program = ppl::parse(read_file(file));
  auto diags = ppl::validate(program);
  if (!diags.empty()) {
    for (const auto& d : diags)
      report("error", d.code, file.string() + ":" + std::to_string(d.line) + ":" + std::to_string(d.column) + ": " +
                                  d.message);
    throw Error("ValidateFailed", file.string() + " does not validate");
  }
  return program;
}

std::string fixed(double p) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", p);
  return buf;
}

struct RunArgs {
  std::string vignette;
  std::size_t k = 20;
  std::uint64_t seed = 0;
  std::string backend = "replay";
  std::string out = "runs";
  std::string fixtures;
  std::string overrides;
  std::string config;
  std::string script;
  std::uint64_t samples = 0;
  std::size_t threads = 0;
  bool quiet = false;
};

int cmd_run(const RunArgs& a) {
  RunRequest request;
  request.vignette = synthesis::vignette_from_json(Json::parse(read_file(a.vignette)));
  request.k = a.k;
  request.seed = a.seed;
  Json cj = a.config.empty() ? Json::object() : Json::parse(read_file(a.config));
  if (!cj.contains("deterministic_timing")) cj["deterministic_timing"] = a.backend == "replay";
  cj["backend"] = a.backend;
  request.config = synthesis::config_from_json(cj);
  if (a.samples) request.config.samples = a.samples;
  request.config.threads = a.threads;
  fs::path overrides = a.overrides.empty() ? synthesis::default_data_dir() / "overrides.json" : fs::path(a.overrides);
  if (fs::exists(overrides)) request.overrides = canonicalize::load_overrides(overrides);

  fs::path fixtures = a.fixtures.empty() ? default_fixture_dir() : fs::path(a.fixtures);
  lm::HttpConfig http;
  if (const char* url = std::getenv("MEDMSA_LM_BASE_URL")) http.base_url = url;
  if (const char* model = std::getenv("MEDMSA_LM_MODEL")) http.model_name = model;
  std::shared_ptr<lm::Backend> backend;
  if (!a.script.empty()) {
    // Scripted upstream: used to author fixtures without a live LM.
    if (a.backend != "record") throw Error("BadConfig", "--script needs --backend record");
    backend = std::make_shared<lm::FixtureBackend>(
        fixtures, lm::FixtureBackend::Mode::Record,
        std::make_shared<lm::ScriptedBackend>(Json::parse(read_file(a.script))));
  } else {
    backend = make_backend(a.backend, fixtures, http);
  }
  lm::Client lm(backend);
  auto prompts = synthesis::PromptSet::load(synthesis::default_data_dir() / "prompts");

  auto result = execute_run(request, lm, prompts, [&](std::size_t index, const std::string& stage) {
    if (!a.quiet && stage == "done") report("info", "", "candidate " + std::to_string(index) + " finished");
  });
  fs::path dir = store::persist_run(a.out, result);
  for (const auto& w : result.warnings) report("warning", "", w);

  std::cout << "run " << result.run.run_id << " -> " << dir.string() << "\n";
  for (const auto& c : result.run.candidates)
    std::cout << "  model " << c.index << ": " << synthesis::status_name(c.status)
              << (c.failed_stage.empty() ? "" : " (" + c.failed_stage + ")") << "\n";
  std::cout << result.run.valid_models().size() << " of " << result.run.k << " models valid\n";
  if (result.no_valid_models) {
    report("error", "NoValidModels", "no candidate compiled; the run was saved with an empty ensemble");
    return kNoValidModels;
  }
  for (const auto& d : result.differentials) {
    std::cout << "\n" << d.query << "\n" << differential::render_bars(differential::top_n(d, 10));
  }
  return kOk;
}

int cmd_differential(const std::string& run, std::size_t query, std::size_t top) {
  auto manifest = store::load_manifest(run);
  if (query < 1 || query > manifest.vignette.queries.size()) {
    report("error", "QueryNotFound", "run has " + std::to_string(manifest.vignette.queries.size()) + " queries");
    return kUsage;
  }
  if (manifest.no_valid_models) {
    report("error", "NoValidModels", "run has no valid models");
    return kNoValidModels;
  }
  auto result = store::load_run(run);
  const auto& d = result.differentials.at(query - 1);
  std::cout << manifest.vignette.queries[query - 1] << "\n" << differential::render_bars(differential::top_n(d, top));
  return kOk;
}

int cmd_edit(const std::string& run, const std::string& model, const std::string& edit_file, std::uint64_t seed,
             bool has_seed) {
  auto edit = intervene::edit_from_json(Json::parse(read_file(edit_file)));
  intervene::InterveneOptions options;
  if (has_seed) options.seed = seed;
  auto r = intervene::intervene(run, model, edit, options);
  std::cout << "version " << r.new_model_version_id << " (lineage";
  for (const auto& id : r.lineage) std::cout << " " << id;
  std::cout << ", seed " << r.seed << ")\n";
  if (r.budget_exhausted) report("warning", "BudgetExhausted", "edited model accepted no samples within the budget");
  for (std::size_t q = 0; q < r.before.size(); ++q) {
    std::cout << "\n" << r.before[q].query << " (model " << model << ")\n";
    std::set<std::string> cats;
    for (const auto& e : r.before[q].entries) cats.insert(e.category);
    for (const auto& e : r.after[q].entries) cats.insert(e.category);
    for (const auto& c : cats)
      std::cout << "  " << c << ": " << fixed(r.before[q].probability(c)) << " -> " << fixed(r.after[q].probability(c))
                << "\n";
  }
  return kOk;
}

int cmd_sample(const std::string& file, std::uint64_t samples, std::uint64_t seed, std::uint64_t max_proposals,
               double seconds) {
  auto program = load_program(file);
  ppl::SampleOptions o;
  o.target_samples = samples;
  o.seed = seed;
  o.budget.max_proposals = max_proposals;
  o.budget.wall_clock = std::chrono::duration<double>(seconds);
  auto set = ppl::rejection_sample(program, o);
  std::cout << "accepted " << set.accepted_count << " of " << set.proposed_count << " proposals\n";
  for (const auto& q : set.query_names)
    for (const auto& [v, p] : set.frequencies(q)) std::cout << "P(" << q << "=" << v << ")=" << p << "\n";
  if (set.budget_exhausted) {
    report("warning", "BudgetExhausted", "stopped before reaching the target sample count");
    return set.accepted_count == 0 ? kRuntime : kOk;
  }
  return kOk;
}

int cmd_enumerate(const std::string& file) {
  auto program = load_program(file);
  auto d = ppl::enumerate(program);
  for (std::size_t i = 0; i < d.query_names.size(); ++i)
    for (const auto& [v, p] : d.probabilities[i])
      std::cout << "P(" << d.query_names[i] << "=" << v << ")=" << ppl::format_number(p) << "\n";
  return kOk;
}

service::Service* g_service = nullptr;

int cmd_serve(const std::string& root, const std::string& host, int port, const std::string& fixtures,
              const std::string& backend, const std::string& cors) {
  service::ServiceConfig config;
  config.root = root;
  if (!fixtures.empty()) config.fixture_dir = fixtures;
  config.default_backend = backend;
  config.cors_origin = cors;
  fs::path overrides = synthesis::default_data_dir() / "overrides.json";
  if (fs::exists(overrides)) config.overrides = overrides;
  service::Service svc(config);
  int bound = svc.bind(host, port);
  if (bound < 0) {
    report("error", "BindFailed", "cannot listen on " + host + ":" + std::to_string(port));
    return kRuntime;
  }
  g_service = &svc;
  std::signal(SIGINT, [](int) {
    if (g_service) g_service->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_service) g_service->stop();
  });
  std::cout << "serving " << root << " on http://" << host << ":" << bound << std::endl;
  svc.listen();
  g_service = nullptr;
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Medical model synthesis: build, ensemble and edit probabilistic diagnosis models"};
  app.require_subcommand(1);
  app.add_flag("--json", g_json, "Write diagnostics to stderr as JSON lines");

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Synthesize k models for a vignette and ensemble them");
  run_cmd->add_option("--vignette", run.vignette, "Vignette JSON file")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--k", run.k, "Number of candidate models")->check(CLI::Range(1, 1000));
  run_cmd->add_option("--seed", run.seed, "Run seed");
  run_cmd->add_option("--backend", run.backend, "LM backend")->check(CLI::IsMember({"replay", "http", "record"}));
  run_cmd->add_option("--out", run.out, "Runs directory");
  run_cmd->add_option("--fixtures", run.fixtures, "Fixture directory (default: shipped fixtures)");
  run_cmd->add_option("--overrides", run.overrides, "Canonicalization overrides JSON");
  run_cmd->add_option("--config", run.config, "Synthesis config JSON")->check(CLI::ExistingFile);
  run_cmd->add_option("--script", run.script, "Scripted LM answers for record mode")->check(CLI::ExistingFile);
  run_cmd->add_option("--samples", run.samples, "Accepted samples per model");
  run_cmd->add_option("--threads", run.threads, "Worker threads (0: all cores)");
  run_cmd->add_flag("--quiet", run.quiet, "No per-candidate progress");

  std::string diff_run;
  std::size_t diff_query = 1, diff_top = 10;
  auto* diff_cmd = app.add_subcommand("differential", "Print a run's ensembled differential");
  diff_cmd->add_option("--run", diff_run, "Run directory")->required();
  diff_cmd->add_option("--query", diff_query, "Query number (1-based)");
  diff_cmd->add_option("--top", diff_top, "Entries to show")->check(CLI::PositiveNumber);

  std::string edit_run, edit_model, edit_file;
  std::uint64_t edit_seed = 0;
  auto* edit_cmd = app.add_subcommand("edit", "Apply a point edit to one model and rerun inference");
  edit_cmd->add_option("--run", edit_run, "Run directory")->required();
  edit_cmd->add_option("--model", edit_model, "Model id (candidate index or v<n>)")->required();
  edit_cmd->add_option("--edit", edit_file, "Edit JSON file")->required()->check(CLI::ExistingFile);
  auto* seed_opt = edit_cmd->add_option("--seed", edit_seed, "Sampling seed (default: derived)");

  std::string sample_file;
  std::uint64_t sample_n = 5000, sample_seed = 0, sample_cap = 10'000'000;
  double sample_seconds = 600;
  auto* sample_cmd = app.add_subcommand("sample", "Rejection-sample a MedPPL program");
  sample_cmd->add_option("--program", sample_file, "MedPPL source")->required()->check(CLI::ExistingFile);
  sample_cmd->add_option("--samples", sample_n, "Accepted samples");
  sample_cmd->add_option("--seed", sample_seed, "Seed");
  sample_cmd->add_option("--max-proposals", sample_cap, "Proposal budget");
  sample_cmd->add_option("--seconds", sample_seconds, "Wall-clock budget");

  std::string enum_file;
  auto* enum_cmd = app.add_subcommand("enumerate", "Exact posterior of a discrete MedPPL program");
  enum_cmd->add_option("--program", enum_file, "MedPPL source")->required()->check(CLI::ExistingFile);

  std::string serve_root = "runs", serve_host = "127.0.0.1", serve_fixtures, serve_backend = "replay", serve_cors = "*";
  int serve_port = 8080;
  auto* serve_cmd = app.add_subcommand("serve", "HTTP service over a runs directory");
  serve_cmd->add_option("--root", serve_root, "Runs directory");
  serve_cmd->add_option("--port", serve_port, "Port (0: any free port)");
  serve_cmd->add_option("--host", serve_host, "Listen address");
  serve_cmd->add_option("--fixtures", serve_fixtures, "Fixture directory");
  serve_cmd->add_option("--backend", serve_backend, "Default LM backend")
      ->check(CLI::IsMember({"replay", "http", "record"}));
  serve_cmd->add_option("--cors-origin", serve_cors, "Access-Control-Allow-Origin value");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*run_cmd) return cmd_run(run);
    if (*diff_cmd) return cmd_differential(diff_run, diff_query, diff_top);
    if (*edit_cmd) return cmd_edit(edit_run, edit_model, edit_file, edit_seed, seed_opt->count() > 0);
    if (*sample_cmd) return cmd_sample(sample_file, sample_n, sample_seed, sample_cap, sample_seconds);
    if (*enum_cmd) return cmd_enumerate(enum_file);
    if (*serve_cmd) return cmd_serve(serve_root, serve_host, serve_port, serve_fixtures, serve_backend, serve_cors);
  } catch (const std::exception& e) {
    report_error(e);
    return kRuntime;
  }
  return kUsage;
}
