#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "medmsa/error.hpp"

namespace medmsa::lm {

enum class Stage { Translate, Sketch, SynthesizeCode, Score, Canonicalize };

const char* stage_name(Stage stage);  // "translate", "sketch", "code", "score", "canonicalize"
Stage parse_stage(const std::string& name);
// 0.2 for SynthesizeCode, Translate and Canonicalize; 0.5 for Sketch and Score.
double default_temperature(Stage stage);

struct LmRequest {
  Stage stage = Stage::Translate;
  std::string prompt;
  double temperature = 0.2;
  int max_tokens = 2048;
  std::vector<std::string> stop_sequences;

  // Request with the stage's default temperature.
  static LmRequest make(Stage stage, std::string prompt);
};

struct LmResponse {
  std::string text;
  std::string backend_id;
  double latency = 0;  // seconds
  std::string fixture_key;  // replay/record only
};

class BackendUnavailable : public Error {
 public:
  explicit BackendUnavailable(const std::string& message) : Error("BackendUnavailable", message) {}
};

class RateLimited : public Error {
 public:
  RateLimited(const std::string& message, double retry_after)
      : Error("RateLimited", message), retry_after_(retry_after) {}
  // Seconds suggested by the server; negative when not given.
  double retry_after() const { return retry_after_; }

 private:
  double retry_after_;
};

class FixtureMissing : public Error {
 public:
  // `paths` are the fixture files that would have to exist.
  explicit FixtureMissing(std::vector<std::string> paths);
  const std::vector<std::string>& paths() const { return paths_; }

 private:
  std::vector<std::string> paths_;
};

class NetworkForbidden : public Error {
 public:
  NetworkForbidden() : Error("NetworkForbidden", "network access attempted in replay mode") {}
};

// Lowercase hex SHA-256 of the stage tag, a newline, and the prompt with
// whitespace runs collapsed to one space and ends trimmed.
std::string fixture_key(Stage stage, const std::string& prompt);
std::string normalize_whitespace(const std::string& text);

class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string id() const = 0;
  // `sample_index` distinguishes independent samples of the same request.
  // Live backends ignore it; fixture backends use it to pick the file.
  virtual LmResponse complete(const LmRequest& request, std::uint64_t sample_index) = 0;
  // n completions with sample indices first_index .. first_index + n - 1.
  // Fails as a whole if any one fails.
  virtual std::vector<LmResponse> complete_many(const LmRequest& request, std::size_t n, std::uint64_t first_index);
};

struct CallRecord {
  Stage stage;
  std::string key;
  std::uint64_t sample_index;
};

// Front end used by the pipeline: forwards to a backend and keeps a call log.
class Client {
 public:
  explicit Client(std::shared_ptr<Backend> backend) : backend_(std::move(backend)) {}

  LmResponse complete(const LmRequest& request, std::uint64_t sample_index = 0);
  std::vector<LmResponse> complete_many(const LmRequest& request, std::size_t n, std::uint64_t first_index = 0);

  std::vector<CallRecord> calls() const;
  std::string backend_id() const { return backend_->id(); }

 private:
  std::shared_ptr<Backend> backend_;
  mutable std::mutex mu_;
  std::vector<CallRecord> calls_;
};

// Raises NetworkForbidden on any call; the upstream of a replay backend.
class ForbiddenBackend : public Backend {
 public:
  std::string id() const override { return "forbidden"; }
  LmResponse complete(const LmRequest&, std::uint64_t) override { throw NetworkForbidden(); }
};

// Fixture store laid out as <dir>/<stage>/<key>.txt for sample 0 and
// <dir>/<stage>/<key>.<i>.txt for sample i > 0.
class FixtureBackend : public Backend {
 public:
  enum class Mode { Replay, Record };

  // Replay never touches `upstream`; Record forwards every call to it and
  // writes the answer. A null upstream in Replay mode is allowed.
  FixtureBackend(std::filesystem::path dir, Mode mode, std::shared_ptr<Backend> upstream = nullptr);

  std::string id() const override;
  LmResponse complete(const LmRequest& request, std::uint64_t sample_index) override;
  std::vector<LmResponse> complete_many(const LmRequest& request, std::size_t n, std::uint64_t first_index) override;

  std::filesystem::path path_for(Stage stage, const std::string& key, std::uint64_t sample_index) const;

 private:
  std::filesystem::path dir_;
  Mode mode_;
  std::shared_ptr<Backend> upstream_;
  std::mutex write_mu_;
};

}  // namespace medmsa::lm
