#include <gtest/gtest.h>
#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "run_helpers.hpp"

using namespace medmsa;
using namespace testing_helpers;
namespace fs = std::filesystem;

namespace {

struct Output {
  int code = -1;
  std::string out;
  std::string err;
};

Output cli(const std::string& args, const fs::path& scratch) {
  fs::path err_file = scratch / "stderr.txt";
  std::string cmd = std::string(MEDMSA_CLI) + " " + args + " 2>" + err_file.string();
  Output o;
  FILE* pipe = popen(cmd.c_str(), "r");
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) o.out.append(buf.data(), n);
  int status = pclose(pipe);
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  o.err = read_file(err_file);
  return o;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

class Cli : public ::testing::Test {
 protected:
  void SetUp() override { dir_ = temp_dir("cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name())); }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

TEST_F(Cli, EnumerateTwoCoins) {
  auto o = cli("enumerate --program " + std::string(MEDMSA_TEST_DATA) + "/corpus/two_coins.medppl", dir_);
  EXPECT_EQ(o.code, 0) << o.err;
  EXPECT_NE(o.out.find("P(q=true)=0.666666"), std::string::npos) << o.out;
}

TEST_F(Cli, SampleReportsFrequencies) {
  auto o = cli("sample --program " + std::string(MEDMSA_TEST_DATA) + "/corpus/two_coins.medppl --samples 5000 --seed 3",
               dir_);
  EXPECT_EQ(o.code, 0) << o.err;
  EXPECT_NE(o.out.find("accepted 5000 of"), std::string::npos);
  EXPECT_NE(o.out.find("P(q=true)=0.6"), std::string::npos) << o.out;
}

TEST_F(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(cli("", dir_).code, 1);
  EXPECT_EQ(cli("frobnicate", dir_).code, 1);
  EXPECT_EQ(cli("run --k 3", dir_).code, 1);
  EXPECT_EQ(cli("enumerate --program /does/not/exist.medppl", dir_).code, 1);
}

TEST_F(Cli, InvalidProgramIsRuntimeErrorWithJsonDiagnostics) {
  write(dir_ / "bad.medppl", "var model = function(){\n  var x = flip(0.5, 0.2)\n  return {q: x}\n}\n");
  auto o = cli("--json enumerate --program " + (dir_ / "bad.medppl").string(), dir_);
  EXPECT_EQ(o.code, 2);
  ASSERT_FALSE(o.err.empty());
  std::istringstream lines(o.err);
  std::string line;
  bool arity = false;
  while (std::getline(lines, line)) {
    Json j = Json::parse(line);  // every stderr line is JSON
    EXPECT_TRUE(j.contains("level"));
    arity |= j.value("code", "") == "ArityMismatch";
  }
  EXPECT_TRUE(arity) << o.err;
}

TEST_F(Cli, MissingFixturesExitTwo) {
  write(dir_ / "v.json", R"({"id": "x", "sentences": ["Nobody recorded this."], "queries": ["Is it?"]})");
  auto o = cli("--json run --vignette " + (dir_ / "v.json").string() + " --k 2 --fixtures " + (dir_ / "none").string() +
                   " --out " + (dir_ / "runs").string(),
               dir_);
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.err.find("\"FixtureMissing\""), std::string::npos) << o.err;
}

// Record a scripted run into a private fixture dir, then replay it offline.
TEST_F(Cli, RecordReplayDifferentialAndEdit) {
  Json script{{"id", "cli"},
              {"responses",
               {{"translate", {v2_translation()}},
                {"sketch", {v2_sketch()}},
                {"code", {"<START_WEBPPL_MODEL>\n" + v2_discrete() + "<END_WEBPPL_MODEL>"}},
                {"canonicalize", {R"({"heart attack": "heart attack"})"}}}},
              {"score", {{"default", "SCORE: 0.9"}}}};
  write(dir_ / "script.json", script.dump());
  write(dir_ / "v.json", synthesis::to_json(sean_v2()).dump());
  std::string common = "--vignette " + (dir_ / "v.json").string() + " --k 2 --seed 5 --samples 3000 --fixtures " +
                       (dir_ / "fixtures").string() + " --quiet";

  auto rec = cli("run --backend record --script " + (dir_ / "script.json").string() + " --out " +
                     (dir_ / "recorded").string() + " " + common,
                 dir_);
  ASSERT_EQ(rec.code, 0) << rec.err;

  auto rep = cli("run --backend replay --out " + (dir_ / "runs").string() + " " + common, dir_);
  ASSERT_EQ(rep.code, 0) << rep.err;
  EXPECT_NE(rep.out.find("2 of 2 models valid"), std::string::npos) << rep.out;
  ASSERT_EQ(std::distance(fs::directory_iterator(dir_ / "runs"), fs::directory_iterator()), 1);
  fs::path run = fs::directory_iterator(dir_ / "runs")->path();

  auto diff = cli("differential --run " + run.string() + " --query 2 --top 3", dir_);
  ASSERT_EQ(diff.code, 0) << diff.err;
  std::istringstream lines(diff.out);
  std::string line;
  int bars = 0;
  while (std::getline(lines, line)) bars += line.find('%') != std::string::npos && line.find("coverage") == std::string::npos;
  EXPECT_EQ(bars, 3) << diff.out;
  EXPECT_NE(diff.out.find("coverage"), std::string::npos);
  EXPECT_EQ(cli("differential --run " + run.string() + " --query 3", dir_).code, 1);

  write(dir_ / "edit.json", R"j({"kind": "ReplaceCondition", "target": {"index": 1}, "payload": "does_exercise('sean')"})j");
  auto edit = cli("edit --run " + run.string() + " --model 1 --edit " + (dir_ / "edit.json").string(), dir_);
  ASSERT_EQ(edit.code, 0) << edit.err;
  EXPECT_NE(edit.out.find("version v1"), std::string::npos) << edit.out;
  EXPECT_NE(edit.out.find("  true: "), std::string::npos) << edit.out;
}

TEST_F(Cli, NoValidModelsExitThree) {
  Json script{{"id", "broken"},
              {"responses",
               {{"translate", {v2_translation()}},
                {"sketch", {v2_sketch()}},
                {"code", {"<START_WEBPPL_MODEL>\nvar model = function(){ let x = 1 }\n<END_WEBPPL_MODEL>"}}}},
              {"score", {{"default", "SCORE: 0.9"}}}};
  write(dir_ / "script.json", script.dump());
  write(dir_ / "v.json", synthesis::to_json(sean_v2()).dump());
  auto o = cli("run --backend record --script " + (dir_ / "script.json").string() + " --vignette " +
                   (dir_ / "v.json").string() + " --k 2 --quiet --fixtures " + (dir_ / "fixtures").string() +
                   " --out " + (dir_ / "runs").string(),
               dir_);
  EXPECT_EQ(o.code, 3) << o.err;
  EXPECT_NE(o.err.find("NoValidModels"), std::string::npos);
}

}  // namespace
