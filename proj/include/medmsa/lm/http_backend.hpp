#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <string>

#include "medmsa/lm/client.hpp"

namespace medmsa::lm {

struct HttpConfig {
  std::string base_url = "https://api.together.xyz/v1";
  std::string model_name = "meta-llama/Llama-3.3-70B-Instruct-Turbo";
  std::chrono::seconds timeout{120};
  // Read from MEDMSA_LM_API_KEY when empty.
  std::string api_key;
  // 429 answers are retried after Retry-After (or an exponential delay from
  // retry_base_delay) up to this many times, then surface as RateLimited.
  int max_retries = 3;
  std::chrono::duration<double> retry_base_delay{1.0};
};

struct HttpResult {
  int status = 0;
  std::string body;
  std::map<std::string, std::string> headers;
};

// Transport seam for tests; the default uses cpp-httplib.
class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  // Throws BackendUnavailable on connection failure.
  virtual HttpResult post_json(const std::string& base_url, const std::string& path, const std::string& body,
                               const std::map<std::string, std::string>& headers, std::chrono::seconds timeout) = 0;
};

std::shared_ptr<HttpTransport> default_transport();

// OpenAI-compatible /chat/completions client; returns the first choice.
class HttpBackend : public Backend {
 public:
  explicit HttpBackend(HttpConfig config, std::shared_ptr<HttpTransport> transport = default_transport());

  std::string id() const override { return "http:" + config_.model_name; }
  LmResponse complete(const LmRequest& request, std::uint64_t sample_index) override;

 private:
  HttpConfig config_;
  std::shared_ptr<HttpTransport> transport_;
};

}  // namespace medmsa::lm
