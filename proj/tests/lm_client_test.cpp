#include <gtest/gtest.h>

#include <httplib.h>

#include <filesystem>
#include <thread>

#include "medmsa/json.hpp"
#include "medmsa/lm/client.hpp"
#include "medmsa/lm/http_backend.hpp"
#include "medmsa/lm/scripted.hpp"

using namespace medmsa;
using namespace medmsa::lm;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("medmsa_lm_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::shared_ptr<ScriptedBackend> translator() {
  return std::make_shared<ScriptedBackend>(Json{
      {"id", "t"},
      {"responses",
       {{"translate",
         {"// CONDITIONS\ncondition(has_chest_pain('sean'))\n", "// CONDITIONS\ncondition(chest_pain('sean'))\n"}}}}});
}

}  // namespace

TEST(Stages, DefaultTemperatures) {
  EXPECT_EQ(default_temperature(Stage::SynthesizeCode), 0.2);
  EXPECT_EQ(default_temperature(Stage::Sketch), 0.5);
  EXPECT_EQ(default_temperature(Stage::Score), 0.5);
  EXPECT_EQ(default_temperature(Stage::Translate), 0.2);
  EXPECT_EQ(default_temperature(Stage::Canonicalize), 0.2);
  EXPECT_EQ(LmRequest::make(Stage::Sketch, "x").temperature, 0.5);
  for (auto s : {Stage::Translate, Stage::Sketch, Stage::SynthesizeCode, Stage::Score, Stage::Canonicalize})
    EXPECT_EQ(parse_stage(stage_name(s)), s);
}

TEST(FixtureKey, NormalizesWhitespaceAndSeparatesStages) {
  EXPECT_EQ(normalize_whitespace("  a \n\t b  "), "a b");
  EXPECT_EQ(fixture_key(Stage::Translate, "Sean has  chest pain.\n"), fixture_key(Stage::Translate, "Sean has chest pain."));
  EXPECT_NE(fixture_key(Stage::Translate, "x"), fixture_key(Stage::Sketch, "x"));
  // Expected value from coreutils sha256sum.
  EXPECT_EQ(fixture_key(Stage::Translate, "abc"), "aa126c44fe7e8d655a8ceaa9d85449486a188f1bb7ec273a29d4a3557c4fe423");
}

TEST(Replay, MissingFixtureReportsKey) {
  auto dir = temp_dir("missing");
  FixtureBackend replay(dir, FixtureBackend::Mode::Replay, std::make_shared<ForbiddenBackend>());
  auto req = LmRequest::make(Stage::Translate, "Sean has chest pain.");
  try {
    replay.complete(req, 0);
    FAIL();
  } catch (const FixtureMissing& e) {
    ASSERT_EQ(e.paths().size(), 1u);
    EXPECT_NE(e.paths()[0].find(fixture_key(req.stage, req.prompt)), std::string::npos);
  }
}

TEST(Replay, RecordThenReplayIsByteIdentical) {
  auto dir = temp_dir("record");
  auto req = LmRequest::make(Stage::Translate, "Sean has chest pain.");
  FixtureBackend record(dir, FixtureBackend::Mode::Record, translator());
  auto first = record.complete(req, 0);
  EXPECT_NE(first.text.find("condition(has_chest_pain('sean'))"), std::string::npos);
  FixtureBackend replay(dir, FixtureBackend::Mode::Replay, std::make_shared<ForbiddenBackend>());
  auto second = replay.complete(req, 0);
  EXPECT_EQ(first.text, second.text);
  EXPECT_EQ(second.fixture_key, fixture_key(req.stage, req.prompt));
  EXPECT_TRUE(std::filesystem::exists(dir / "translate" / (second.fixture_key + ".txt")));
}

TEST(Replay, CompleteManyIndexesSamples) {
  auto dir = temp_dir("many");
  auto req = LmRequest::make(Stage::Translate, "Sean has chest pain.");
  FixtureBackend record(dir, FixtureBackend::Mode::Record, translator());
  auto recorded = record.complete_many(req, 4, 0);
  ASSERT_EQ(recorded.size(), 4u);
  EXPECT_NE(recorded[0].text, recorded[1].text);
  Client client(std::make_shared<FixtureBackend>(dir, FixtureBackend::Mode::Replay));
  auto four = client.complete_many(req, 4);
  ASSERT_EQ(four.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(four[i].text, recorded[i].text);
  auto one = client.complete_many(req, 1);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].text, client.complete(req).text);
  EXPECT_EQ(client.calls().size(), 6u);
}

TEST(Replay, CompleteManyIsAtomicOnMissing) {
  auto dir = temp_dir("atomic");
  auto req = LmRequest::make(Stage::Translate, "Sean has chest pain.");
  FixtureBackend record(dir, FixtureBackend::Mode::Record, translator());
  record.complete_many(req, 3, 0);
  std::filesystem::remove(record.path_for(req.stage, fixture_key(req.stage, req.prompt), 1));
  FixtureBackend replay(dir, FixtureBackend::Mode::Replay);
  try {
    replay.complete_many(req, 4, 0);
    FAIL();
  } catch (const FixtureMissing& e) {
    EXPECT_EQ(e.paths().size(), 2u);  // samples 1 and 3
  }
}

TEST(Replay, NeverCallsUpstream) {
  auto dir = temp_dir("forbid");
  auto req = LmRequest::make(Stage::Score, "anything");
  FixtureBackend replay(dir, FixtureBackend::Mode::Replay, std::make_shared<ForbiddenBackend>());
  EXPECT_THROW(replay.complete(req, 0), FixtureMissing);
  ForbiddenBackend forbidden;
  EXPECT_THROW(forbidden.complete(req, 0), NetworkForbidden);
}

TEST(Scripted, ScoreRules) {
  ScriptedBackend b(Json{{"score", {{"rules", {{{"match", "bad_model"}, {"text", "SCORE: 0.1"}}}}, {"default", "SCORE: 0.9"}}}});
  EXPECT_EQ(b.complete(LmRequest::make(Stage::Score, "... bad_model ..."), 0).text, "SCORE: 0.1");
  EXPECT_EQ(b.complete(LmRequest::make(Stage::Score, "fine"), 0).text, "SCORE: 0.9");
  EXPECT_THROW(b.complete(LmRequest::make(Stage::Sketch, "x"), 0), BackendUnavailable);
}

class FakeServer : public ::testing::Test {
 protected:
  void SetUp() override {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      last_body_ = Json::parse(req.body);
      last_auth_ = req.get_header_value("Authorization");
      ++requests_;
      if (mode_ == "limit") {
        res.status = 429;
        res.set_header("Retry-After", "7");
        return;
      }
      if (mode_ == "limit_once" && requests_ == 1) {
        res.status = 429;
        return;
      }
      if (mode_ == "broken") {
        res.status = 500;
        res.set_content("boom", "text/plain");
        return;
      }
      Json reply{{"choices", Json::array({Json{{"message", {{"role", "assistant"}, {"content", "hello"}}}}})}};
      res.set_content(reply.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  void TearDown() override {
    server_.stop();
    thread_.join();
  }

  HttpBackend backend(int max_retries = 0) {
    HttpConfig c;
    c.max_retries = max_retries;
    c.retry_base_delay = std::chrono::duration<double>(0.01);
    c.base_url = "http://127.0.0.1:" + std::to_string(port_) + "/v1";
    c.model_name = "test-model";
    c.api_key = "secret";
    c.timeout = std::chrono::seconds(5);
    return HttpBackend(c);
  }

  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::string mode_ = "ok";
  int requests_ = 0;
  Json last_body_;
  std::string last_auth_;
};

TEST_F(FakeServer, PostsChatCompletion) {
  auto b = backend();
  auto req = LmRequest::make(Stage::SynthesizeCode, "write a model");
  req.stop_sequences = {"<END_WEBPPL_MODEL>"};
  auto res = b.complete(req, 0);
  EXPECT_EQ(res.text, "hello");
  EXPECT_EQ(last_body_["model"], "test-model");
  EXPECT_EQ(last_body_["temperature"], 0.2);
  EXPECT_EQ(last_body_["messages"][0]["content"], "write a model");
  EXPECT_EQ(last_body_["stop"][0], "<END_WEBPPL_MODEL>");
  EXPECT_EQ(last_auth_, "Bearer secret");
}

TEST_F(FakeServer, RateLimitCarriesRetryAfter) {
  mode_ = "limit";
  auto b = backend();
  try {
    b.complete(LmRequest::make(Stage::Score, "x"), 0);
    FAIL();
  } catch (const RateLimited& e) {
    EXPECT_EQ(e.retry_after(), 7);
  }
}

TEST_F(FakeServer, RateLimitIsRetried) {
  mode_ = "limit_once";
  auto b = backend(2);
  EXPECT_EQ(b.complete(LmRequest::make(Stage::Score, "x"), 0).text, "hello");
  EXPECT_EQ(requests_, 2);
}

TEST_F(FakeServer, ServerErrorIsUnavailable) {
  mode_ = "broken";
  auto b = backend();
  EXPECT_THROW(b.complete(LmRequest::make(Stage::Score, "x"), 0), BackendUnavailable);
}

TEST(Http, UnreachableIsUnavailable) {
  HttpConfig c;
  c.base_url = "http://127.0.0.1:1";
  c.timeout = std::chrono::seconds(2);
  HttpBackend b(c);
  EXPECT_THROW(b.complete(LmRequest::make(Stage::Score, "x"), 0), BackendUnavailable);
}
