#include "medmsa/lm/http_backend.hpp"

#include <httplib.h>

#include <algorithm>
#include <cstdlib>
#include <thread>

#include "medmsa/json.hpp"

namespace medmsa::lm {
namespace {

class HttplibTransport : public HttpTransport {
 public:
  HttpResult post_json(const std::string& base_url, const std::string& path, const std::string& body,
                       const std::map<std::string, std::string>& headers, std::chrono::seconds timeout) override {
    // Split "scheme://host[:port]/prefix" into origin and path prefix.
    auto scheme_end = base_url.find("://");
    auto path_start = base_url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    std::string origin = base_url.substr(0, path_start);
    std::string prefix = path_start == std::string::npos ? "" : base_url.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();

    httplib::Client client(origin);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    httplib::Headers h;
    for (const auto& [k, v] : headers) h.emplace(k, v);
    auto res = client.Post(prefix + path, h, body, "application/json");
    if (!res) throw BackendUnavailable("request to " + origin + " failed: " + httplib::to_string(res.error()));
    HttpResult out;
    out.status = res->status;
    out.body = res->body;
    for (const auto& [k, v] : res->headers) out.headers[k] = v;
    return out;
  }
};

}  // namespace

std::shared_ptr<HttpTransport> default_transport() { return std::make_shared<HttplibTransport>(); }

HttpBackend::HttpBackend(HttpConfig config, std::shared_ptr<HttpTransport> transport)
    : config_(std::move(config)), transport_(std::move(transport)) {
  if (config_.api_key.empty()) {
    if (const char* key = std::getenv("MEDMSA_LM_API_KEY")) config_.api_key = key;
  }
}

LmResponse HttpBackend::complete(const LmRequest& request, std::uint64_t) {
  Json body{{"model", config_.model_name},
            {"messages", Json::array({Json{{"role", "user"}, {"content", request.prompt}}})},
            {"temperature", request.temperature},
            {"max_tokens", request.max_tokens}};
  if (!request.stop_sequences.empty()) body["stop"] = request.stop_sequences;
  std::map<std::string, std::string> headers;
  if (!config_.api_key.empty()) headers["Authorization"] = "Bearer " + config_.api_key;

  auto start = std::chrono::steady_clock::now();
  HttpResult res;
  for (int attempt = 0;; ++attempt) {
    res = transport_->post_json(config_.base_url, "/chat/completions", body.dump(), headers, config_.timeout);
    if (res.status != 429) break;
    double retry = -1;
    for (const auto& [k, v] : res.headers) {
      if (httplib::detail::compare_case_ignore(k, "Retry-After")) {
        try {
          retry = std::stod(v);
        } catch (const std::exception&) {
        }
      }
    }
    if (attempt >= config_.max_retries) throw RateLimited("rate limited by " + config_.base_url, retry);
    double wait = retry >= 0 ? retry : config_.retry_base_delay.count() * (1 << attempt);
    std::this_thread::sleep_for(std::chrono::duration<double>(std::min(wait, 60.0)));
  }
  double latency = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  if (res.status < 200 || res.status >= 300)
    throw BackendUnavailable("HTTP " + std::to_string(res.status) + " from " + config_.base_url + ": " +
                             res.body.substr(0, 200));
  std::string text;
  try {
    auto j = Json::parse(res.body);
    text = j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const std::exception& e) {
    throw BackendUnavailable(std::string("malformed chat completion response: ") + e.what());
  }
  if (text.empty()) throw BackendUnavailable("empty completion");
  return LmResponse{std::move(text), id(), latency, ""};
}

}  // namespace medmsa::lm
