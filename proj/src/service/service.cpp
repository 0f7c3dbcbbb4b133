#include "medmsa/service/service.hpp"

#include <httplib.h>

#include <algorithm>
#include <array>
#include <optional>

#include "medmsa/canonicalize/mapping.hpp"
#include "medmsa/differential/ensemble.hpp"
#include "medmsa/fsutil.hpp"
#include "medmsa/intervene/intervene.hpp"
#include "medmsa/lm/client.hpp"
#include "medmsa/ppl/edit.hpp"
#include "medmsa/runner.hpp"
#include "medmsa/service/api_error.hpp"
#include "medmsa/store/store.hpp"

namespace medmsa::service {
namespace fs = std::filesystem;

Json ApiError::body() const {
  return Json{{"schema_version", store::kSchemaVersion},
              {"error", {{"status", status}, {"code", code}, {"message", message}, {"details", details}}}};
}

ApiError api_error_from(const std::exception& e) {
  auto make = [&](int status, const char* code) { return ApiError{status, code, e.what(), Json::object()}; };
  if (dynamic_cast<const store::RunNotFound*>(&e)) return make(404, "RUN_NOT_FOUND");
  if (dynamic_cast<const store::IncompleteRun*>(&e)) return make(409, "RUN_INCOMPLETE");
  if (dynamic_cast<const store::DuplicateRunId*>(&e)) return make(409, "DUPLICATE_RUN");
  if (dynamic_cast<const intervene::ModelNotFound*>(&e)) return make(404, "MODEL_NOT_FOUND");
  if (dynamic_cast<const intervene::ModelNotCompiled*>(&e)) return make(409, "MODEL_NOT_COMPILED");
  if (dynamic_cast<const ppl::EditTargetMissing*>(&e)) return make(422, "EDIT_TARGET_MISSING");
  if (const auto* invalid = dynamic_cast<const ppl::EditProducesInvalidProgram*>(&e)) {
    ApiError a = make(422, "EDIT_INVALID");
    Json diags = Json::array();
    for (const auto& d : invalid->diagnostics())
      diags.push_back(Json{{"code", d.code}, {"message", d.message}, {"line", d.line}, {"column", d.column}});
    a.details["diagnostics"] = diags;
    return a;
  }
  if (dynamic_cast<const differential::NoValidModels*>(&e)) return make(409, "NO_VALID_MODELS");
  if (const auto* missing = dynamic_cast<const lm::FixtureMissing*>(&e)) {
    ApiError a = make(424, "FIXTURE_MISSING");
    a.details["paths"] = missing->paths();
    return a;
  }
  if (dynamic_cast<const lm::BackendUnavailable*>(&e) || dynamic_cast<const lm::RateLimited*>(&e) ||
      dynamic_cast<const lm::NetworkForbidden*>(&e))
    return make(502, "BACKEND_UNAVAILABLE");
  if (const auto* err = dynamic_cast<const Error*>(&e)) {
    const auto& c = err->code();
    if (c == "BadEdit") return make(422, "EDIT_INVALID");
    if (c == "BadVignette" || c == "BadConfig" || c == "BadRequest" || c == "BadInput") return make(400, "BAD_REQUEST");
  }
  return make(500, "INTERNAL");
}

namespace {

constexpr std::array<const char*, 6> kStages = {"translate", "sketch", "code", "checks", "sampling", "done"};

int stage_rank(const std::string& stage) {
  for (std::size_t i = 0; i < kStages.size(); ++i)
    if (stage == kStages[i]) return static_cast<int>(i) + 1;
  return 0;
}

void send_json(httplib::Response& res, int status, Json body) {
  if (body.is_object() && !body.contains("schema_version")) {
    Json ordered{{"schema_version", store::kSchemaVersion}};
    ordered.update(body);
    body = std::move(ordered);
  }
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, const ApiError& e) { send_json(res, e.status, e.body()); }

template <class F>
void guarded(httplib::Response& res, F&& f) {
  try {
    f();
  } catch (const std::exception& e) {
    send_error(res, api_error_from(e));
  }
}

ApiError bad_request(const std::string& message) { return ApiError{400, "BAD_REQUEST", message, Json::object()}; }

Json parse_body(const httplib::Request& req) {
  Json j = Json::parse(req.body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error("BadRequest", "request body must be a JSON object");
  return j;
}

std::optional<long> int_param(const httplib::Request& req, const std::string& name, long fallback) {
  if (!req.has_param(name)) return fallback;
  const std::string v = req.get_param_value(name);
  try {
    std::size_t used = 0;
    long n = std::stol(v, &used);
    if (used != v.size()) return std::nullopt;
    return n;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

Json candidate_view(const synthesis::ModelCandidate& c) {
  Json j = synthesis::checks_json(c);
  j["model_id"] = std::to_string(c.index);
  j["accepted_count"] = c.sample_set ? c.sample_set->accepted_count : 0;
  j["has_source"] = !c.source.empty();
  if (c.translation) j["translation"] = synthesis::to_json(*c.translation);
  if (c.sketch) j["sketch"] = synthesis::to_json(*c.sketch);
  return j;
}

}  // namespace

struct Service::Progress {
  std::mutex mu;
  std::string status = "running";
  std::vector<int> stages;
  std::optional<ApiError> error;
};

Service::Service(ServiceConfig config) : config_(std::move(config)), server_(std::make_unique<httplib::Server>()) {
  if (config_.fixture_dir.empty()) config_.fixture_dir = default_fixture_dir();
  if (config_.prompts_dir.empty()) config_.prompts_dir = synthesis::default_data_dir() / "prompts";
  fs::create_directories(config_.root);
  routes();
}

Service::~Service() {
  stop();
  wait_idle();
}

int Service::bind(const std::string& host, int port) {
  if (port == 0) return server_->bind_to_any_port(host);
  return server_->bind_to_port(host, port) ? port : -1;
}

void Service::listen() { server_->listen_after_bind(); }

void Service::stop() {
  if (server_->is_running()) server_->stop();
}

void Service::wait_idle() {
  std::vector<std::thread> workers;
  {
    std::lock_guard lock(mu_);
    workers.swap(workers_);
  }
  for (auto& t : workers)
    if (t.joinable()) t.join();
}

void Service::start_run(const Json& body, Json& reply) {
  if (!body.contains("vignette")) throw Error("BadRequest", "missing 'vignette'");
  Json vj = body.at("vignette");
  if (body.contains("queries")) vj["queries"] = body.at("queries");
  RunRequest request;
  request.vignette = synthesis::vignette_from_json(vj);
  if (body.contains("k") && !body.at("k").is_number_unsigned()) throw Error("BadRequest", "'k' must be a positive integer");
  request.k = body.value("k", std::size_t{20});
  if (request.k == 0 || request.k > 200) throw Error("BadRequest", "'k' must be between 1 and 200");
  if (body.contains("seed") && !body.at("seed").is_number_unsigned())
    throw Error("BadRequest", "'seed' must be a non-negative integer");
  request.seed = body.value("seed", std::uint64_t{0});
  std::string backend_kind = body.value("backend", config_.default_backend);
  Json cj = body.value("config", Json::object());
  if (!cj.is_object()) throw Error("BadRequest", "'config' must be an object");
  if (!cj.contains("deterministic_timing")) cj["deterministic_timing"] = backend_kind == "replay";
  cj["backend"] = backend_kind;
  request.config = synthesis::config_from_json(cj);
  request.config.threads = config_.run_threads;
  if (!config_.overrides.empty()) request.overrides = canonicalize::load_overrides(config_.overrides);

  auto backend = make_backend(backend_kind, config_.fixture_dir, config_.http);
  auto prompts = synthesis::PromptSet::load(config_.prompts_dir);
  auto started = request.config.deterministic_timing ? std::chrono::system_clock::time_point{}
                                                     : std::chrono::system_clock::now();
  request.run_id = run_id_for(request, prompts, backend->id(), started);

  auto progress = std::make_shared<Progress>();
  progress->stages.assign(request.k, 0);
  {
    std::lock_guard lock(mu_);
    if (auto it = active_.find(request.run_id); it != active_.end()) {
      std::lock_guard plock(it->second->mu);
      if (it->second->status == "running")
        throw ApiError{409, "RUN_IN_PROGRESS", "run " + request.run_id + " is already running", Json::object()};
    }
    if (fs::exists(store::run_dir(config_.root, request.run_id) / "manifest.json"))
      throw ApiError{409, "DUPLICATE_RUN", "run " + request.run_id + " already exists",
                     Json{{"run_id", request.run_id}}};
    active_[request.run_id] = progress;
    workers_.emplace_back([this, request, backend, prompts, progress] {
      try {
        lm::Client lm(backend);
        auto result = execute_run(request, lm, prompts, [&](std::size_t index, const std::string& stage) {
          std::lock_guard plock(progress->mu);
          int& current = progress->stages.at(index - 1);
          current = std::max(current, stage_rank(stage));
        });
        store::persist_run(config_.root, result);
        std::lock_guard plock(progress->mu);
        progress->status = "completed";
      } catch (const std::exception& e) {
        std::lock_guard plock(progress->mu);
        progress->status = "failed";
        progress->error = api_error_from(e);
      }
    });
  }
  reply = Json{{"run_id", request.run_id}, {"status", "running"}, {"location", "/runs/" + request.run_id}};
}

Json Service::run_status(const std::string& run_id) {
  std::shared_ptr<Progress> progress;
  {
    std::lock_guard lock(mu_);
    if (auto it = active_.find(run_id); it != active_.end()) progress = it->second;
  }
  if (progress) {
    std::lock_guard plock(progress->mu);
    if (progress->status == "running") {
      Json candidates = Json::array();
      for (std::size_t i = 0; i < progress->stages.size(); ++i) {
        int rank = progress->stages[i];
        candidates.push_back(Json{{"index", i + 1}, {"stage", rank == 0 ? "queued" : kStages[rank - 1]}});
      }
      return Json{{"run_id", run_id}, {"status", "running"}, {"candidates", candidates}};
    }
    if (progress->status == "failed")
      return Json{{"run_id", run_id}, {"status", "failed"}, {"error", progress->error->body()["error"]}};
  }
  auto manifest = store::load_manifest(store::run_dir(config_.root, run_id));
  Json candidates = Json::array();
  for (const auto& c : manifest.candidates)
    candidates.push_back(Json{{"index", c.index},
                              {"stage", "done"},
                              {"status", synthesis::status_name(c.status)},
                              {"failed_stage", c.failed_stage},
                              {"semantic_score", c.semantic_score},
                              {"accepted_count", c.accepted_count}});
  Json m = store::to_json(manifest);
  m.erase("candidates");
  return Json{{"run_id", run_id}, {"status", "completed"}, {"manifest", m}, {"candidates", candidates}};
}

void Service::routes() {
  auto& s = *server_;
  const std::string run = R"(/runs/([0-9A-Za-z_-]+))";
  const std::string model = run + R"(/models/([0-9A-Za-z]+))";

  s.set_post_routing_handler([this](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", config_.cors_origin);
    res.set_header("X-Schema-Version", std::to_string(store::kSchemaVersion));
  });
  s.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) {
      int status = res.status;
      send_error(res, ApiError{status, status == 404 ? "NOT_FOUND" : (status < 500 ? "BAD_REQUEST" : "INTERNAL"),
                               "HTTP " + std::to_string(status), Json::object()});
    }
  });
  s.Options(R"(.*)", [this](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });

  s.Get("/health", [](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, Json{{"status", "ok"}});
  });

  s.Post("/runs", [this](const httplib::Request& req, httplib::Response& res) {
    try {
      Json reply;
      start_run(parse_body(req), reply);
      send_json(res, 202, reply);
    } catch (const ApiError& e) {
      send_error(res, e);
    } catch (const std::exception& e) {
      send_error(res, api_error_from(e));
    }
  });

  s.Get("/runs", [this](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] {
      auto listing = store::list_runs(config_.root);
      Json runs = Json::array();
      for (const auto& m : listing.runs) {
        std::size_t valid = std::count_if(m.candidates.begin(), m.candidates.end(), [](const auto& c) {
          return c.status == synthesis::CandidateStatus::Compiled && c.accepted_count > 0;
        });
        runs.push_back(Json{{"run_id", m.run_id},
                            {"vignette_id", m.vignette.id},
                            {"k", m.k},
                            {"seed", m.seed},
                            {"valid_models", valid},
                            {"no_valid_models", m.no_valid_models},
                            {"started", m.timestamps.empty() ? "" : m.timestamps.front().second}});
      }
      Json active = Json::array();
      {
        std::lock_guard lock(mu_);
        for (const auto& [id, p] : active_) {
          std::lock_guard plock(p->mu);
          if (p->status == "running") active.push_back(id);
        }
      }
      send_json(res, 200, Json{{"runs", runs}, {"active", active}, {"warnings", listing.warnings}});
    });
  });

  s.Get(run, [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, run_status(req.matches[1])); });
  });

  s.Get(run + "/models", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      fs::path dir = store::run_dir(config_.root, req.matches[1]);
      auto result = store::load_run(dir);
      Json models = Json::array();
      for (const auto& c : result.run.candidates) models.push_back(candidate_view(c));
      Json versions = Json::array();
      for (const auto& r : intervene::list_interventions(dir))
        versions.push_back(Json{{"model_id", r.new_model_version_id},
                                {"parent", r.base_model_id},
                                {"lineage", r.lineage},
                                {"edit", intervene::to_json(r.edit)},
                                {"accepted_count", r.accepted_count},
                                {"budget_exhausted", r.budget_exhausted}});
      send_json(res, 200, Json{{"run_id", result.run.run_id}, {"models", models}, {"versions", versions}});
    });
  });

  s.Get(model + "/source", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      fs::path dir = store::run_dir(config_.root, req.matches[1]);
      store::load_manifest(dir);
      std::string source = intervene::model_source(dir, req.matches[2]);
      if (source.empty()) throw intervene::ModelNotFound(req.matches[2].str() + " (no source: failed before code)");
      res.status = 200;
      res.set_content(source, "text/plain; charset=utf-8");
    });
  });

  s.Get(run + "/differential", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      fs::path dir = store::run_dir(config_.root, req.matches[1]);
      auto manifest = store::load_manifest(dir);
      auto query = int_param(req, "query", 1);
      auto top = int_param(req, "top", 10);
      if (!query || !top || *top < 1) return send_error(res, bad_request("query and top must be positive integers"));
      if (*query < 1 || static_cast<std::size_t>(*query) > manifest.vignette.queries.size())
        return send_error(res, ApiError{404, "QUERY_NOT_FOUND",
                                        "run has " + std::to_string(manifest.vignette.queries.size()) + " queries",
                                        Json::object()});
      if (manifest.no_valid_models) throw differential::NoValidModels();
      std::string key = synthesis::query_key(*query - 1);
      auto full = differential::distribution_from_json(Json::parse(read_file(dir / "differential" / (key + ".json"))));
      auto shown = differential::top_n(full, *top);
      send_json(res, 200, Json{{"run_id", manifest.run_id},
                               {"query_index", *query},
                               {"question", manifest.vignette.queries[*query - 1]},
                               {"top", *top},
                               {"total_entries", full.entries.size()},
                               {"distribution", differential::to_json(shown)}});
    });
  });

  s.Post(model + "/edits", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      fs::path dir = store::run_dir(config_.root, req.matches[1]);
      store::load_manifest(dir);
      Json body = Json::parse(req.body, nullptr, false);
      if (body.is_discarded()) return send_error(res, bad_request("request body is not JSON"));
      ppl::Edit edit = intervene::edit_from_json(body);
      intervene::InterveneOptions options;
      std::unique_ptr<lm::Client> lm;
      if (config_.default_backend != "replay") {
        lm = std::make_unique<lm::Client>(make_backend(config_.default_backend, config_.fixture_dir, config_.http));
        options.lm = lm.get();
        options.canonicalize_prompt = synthesis::PromptSet::load(config_.prompts_dir).canonicalize;
        if (!config_.overrides.empty()) options.overrides = canonicalize::load_overrides(config_.overrides);
      }
      auto result = intervene::intervene(dir, req.matches[2], edit, options);
      send_json(res, 200, intervene::to_json(result));
    });
  });

  s.Get(run + "/interventions", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      fs::path dir = store::run_dir(config_.root, req.matches[1]);
      Json list = Json::array();
      for (const auto& r : intervene::list_interventions(dir)) list.push_back(intervene::to_json(r));
      send_json(res, 200, Json{{"run_id", req.matches[1].str()}, {"interventions", list}});
    });
  });
}

}  // namespace medmsa::service
