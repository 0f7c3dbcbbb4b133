#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "medmsa/json.hpp"
#include "medmsa/lm/http_backend.hpp"

namespace httplib {
class Server;
}

namespace medmsa::service {

struct ServiceConfig {
  std::filesystem::path root;
  std::filesystem::path fixture_dir;
  std::filesystem::path prompts_dir;
  // Optional overrides file for canonicalization.
  std::filesystem::path overrides;
  std::string default_backend = "replay";
  lm::HttpConfig http;
  // Value of Access-Control-Allow-Origin.
  std::string cors_origin = "*";
  // Worker threads per synthesis run (0: hardware concurrency).
  std::size_t run_threads = 0;
};

// JSON-over-HTTP front end over a runs directory. Synthesis runs execute on
// background threads; everything else is computed from the run directory.
class Service {
 public:
  explicit Service(ServiceConfig config);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Binds to host:port (port 0 picks a free port) and returns the port, or
  // -1 on failure.
  int bind(const std::string& host, int port);
  // Serves until stop(); blocks.
  void listen();
  void stop();
  // Blocks until no synthesis run is active.
  void wait_idle();

 private:
  struct Progress;

  void routes();
  Json run_status(const std::string& run_id);
  void start_run(const Json& body, Json& reply);

  ServiceConfig config_;
  std::unique_ptr<httplib::Server> server_;
  std::mutex mu_;
  std::map<std::string, std::shared_ptr<Progress>> active_;
  std::vector<std::thread> workers_;
};

}  // namespace medmsa::service
