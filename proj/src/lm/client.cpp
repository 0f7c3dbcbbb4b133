#include "medmsa/lm/client.hpp"

#include <openssl/evp.h>

#include <array>
#include <chrono>
#include <fstream>
#include <sstream>

#include "medmsa/fsutil.hpp"

namespace medmsa::lm {
namespace {

std::string join_paths(const std::vector<std::string>& paths) {
  std::string out;
  for (const auto& p : paths) out += (out.empty() ? "" : ", ") + p;
  return out;
}

}  // namespace

const char* stage_name(Stage stage) {
  switch (stage) {
    case Stage::Translate: return "translate";
    case Stage::Sketch: return "sketch";
    case Stage::SynthesizeCode: return "code";
    case Stage::Score: return "score";
    case Stage::Canonicalize: return "canonicalize";
  }
  return "";
}

Stage parse_stage(const std::string& name) {
  for (auto s : {Stage::Translate, Stage::Sketch, Stage::SynthesizeCode, Stage::Score, Stage::Canonicalize})
    if (name == stage_name(s)) return s;
  throw Error("BadStage", "unknown LM stage '" + name + "'");
}

double default_temperature(Stage stage) {
  return stage == Stage::Sketch || stage == Stage::Score ? 0.5 : 0.2;
}

LmRequest LmRequest::make(Stage stage, std::string prompt) {
  LmRequest r;
  r.stage = stage;
  r.prompt = std::move(prompt);
  r.temperature = default_temperature(stage);
  return r;
}

FixtureMissing::FixtureMissing(std::vector<std::string> paths)
    : Error("FixtureMissing", "no fixture for: " + join_paths(paths)), paths_(std::move(paths)) {}

std::string normalize_whitespace(const std::string& text) {
  std::string out;
  bool pending = false;
  for (char c : text) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
      pending = !out.empty();
      continue;
    }
    if (pending) out += ' ';
    pending = false;
    out += c;
  }
  return out;
}

std::string fixture_key(Stage stage, const std::string& prompt) {
  std::string material = std::string(stage_name(stage)) + "\n" + normalize_whitespace(prompt);
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(material.data(), material.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1)
    throw Error("HashError", "SHA-256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xf];
  }
  return out;
}

std::vector<LmResponse> Backend::complete_many(const LmRequest& request, std::size_t n, std::uint64_t first_index) {
  std::vector<LmResponse> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(complete(request, first_index + i));
  return out;
}

LmResponse Client::complete(const LmRequest& request, std::uint64_t sample_index) {
  {
    std::lock_guard lock(mu_);
    calls_.push_back(CallRecord{request.stage, fixture_key(request.stage, request.prompt), sample_index});
  }
  return backend_->complete(request, sample_index);
}

std::vector<LmResponse> Client::complete_many(const LmRequest& request, std::size_t n, std::uint64_t first_index) {
  if (n == 0) throw Error("BadRequest", "complete_many needs n >= 1");
  {
    std::lock_guard lock(mu_);
    auto key = fixture_key(request.stage, request.prompt);
    for (std::size_t i = 0; i < n; ++i) calls_.push_back(CallRecord{request.stage, key, first_index + i});
  }
  return backend_->complete_many(request, n, first_index);
}

std::vector<CallRecord> Client::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

FixtureBackend::FixtureBackend(std::filesystem::path dir, Mode mode, std::shared_ptr<Backend> upstream)
    : dir_(std::move(dir)), mode_(mode), upstream_(std::move(upstream)) {
  if (mode_ == Mode::Record && !upstream_) throw Error("BadConfig", "record mode needs an upstream backend");
}

std::string FixtureBackend::id() const {
  return mode_ == Mode::Replay ? "replay" : "record:" + upstream_->id();
}

std::filesystem::path FixtureBackend::path_for(Stage stage, const std::string& key, std::uint64_t sample_index) const {
  std::string name = sample_index == 0 ? key + ".txt" : key + "." + std::to_string(sample_index) + ".txt";
  return dir_ / stage_name(stage) / name;
}

LmResponse FixtureBackend::complete(const LmRequest& request, std::uint64_t sample_index) {
  auto start = std::chrono::steady_clock::now();
  std::string key = fixture_key(request.stage, request.prompt);
  auto path = path_for(request.stage, key, sample_index);
  LmResponse out;
  if (mode_ == Mode::Record) {
    out = upstream_->complete(request, sample_index);
    std::lock_guard lock(write_mu_);
    write_file_atomic(path, out.text);
  } else {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FixtureMissing({path.string()});
    std::ostringstream ss;
    ss << in.rdbuf();
    out.text = ss.str();
    if (out.text.empty()) throw BackendUnavailable("fixture " + path.string() + " is empty");
  }
  out.backend_id = id();
  out.fixture_key = key;
  out.latency = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

std::vector<LmResponse> FixtureBackend::complete_many(const LmRequest& request, std::size_t n,
                                                      std::uint64_t first_index) {
  if (mode_ == Mode::Replay) {
    std::string key = fixture_key(request.stage, request.prompt);
    std::vector<std::string> missing;
    for (std::size_t i = 0; i < n; ++i) {
      auto path = path_for(request.stage, key, first_index + i);
      if (!std::filesystem::exists(path)) missing.push_back(path.string());
    }
    if (!missing.empty()) throw FixtureMissing(std::move(missing));
  }
  return Backend::complete_many(request, n, first_index);
}

}  // namespace medmsa::lm
