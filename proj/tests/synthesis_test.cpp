#include <gtest/gtest.h>

#include <filesystem>
#include <map>
#include <mutex>
#include <regex>

#include "medmsa/json.hpp"
#include "medmsa/lm/scripted.hpp"
#include "medmsa/ppl/json_io.hpp"
#include "medmsa/ppl/program.hpp"
#include "medmsa/synthesis/pipeline.hpp"
#include "test_util.hpp"

using namespace medmsa;
using namespace medmsa::synthesis;

namespace {

Vignette sean() {
  return Vignette{"v1", {"Sean has chest pain.", "He also feels lightheaded."},
                  {"Is Sean having a heart attack?", "What ailment does Sean have?"}};
}

const char* kTranslation =
    "Sure.\n<START_LANGUAGE_TO_WEBPPL_CODE>\n// CONDITIONS\ncondition(has_chest_pain('sean'))\n"
    "condition(feels_lightheaded('sean'));\n\n// QUERIES\nis_having_heart_attack('sean')\nhas_ailment('sean')\n"
    "<END_LANGUAGE_TO_WEBPPL_CODE>";

const char* kSketch =
    "<START_SCRATCHPAD>Chest pain and lightheadedness both depend on the ailment.\n"
    "<START_CONCEPT_TRACE>\n- has_ailment\n- has_chest_pain\n  - depends on: has_ailment\n"
    "- feels_lightheaded\n  - depends on: has_ailment\n- is_having_heart_attack\n  - depends on: has_ailment\n"
    "<END_CONCEPT_TRACE>";

std::string model(double heart_attack, const std::string& conditions = "  condition(has_chest_pain('sean'))\n  condition(feels_lightheaded('sean'))\n") {
  return "var model = function(){\n"
         "  var has_ailment = mem(function(p){\n"
         "    return categorical({ps: [" + std::to_string(heart_attack) + ", 0.5, 0.2], vs: ['heart attack', 'panic attack', 'other']})\n"
         "  })\n"
         "  var has_chest_pain = mem(function(p){ return has_ailment(p) == 'other' ? flip(0.1) : flip(0.8) })\n"
         "  var feels_lightheaded = mem(function(p){ return has_ailment(p) == 'heart attack' ? flip(0.6) : flip(0.3) })\n"
         "  var is_having_heart_attack = function(p){ return has_ailment(p) == 'heart attack' }\n" +
         conditions +
         "  return {query1: is_having_heart_attack('sean'), query2: has_ailment('sean')}\n"
         "}\n";
}

std::string wrap(const std::string& program) {
  return "Here is the model.\n<START_WEBPPL_MODEL>\n" + program + "<END_WEBPPL_MODEL>\n";
}

PromptSet prompts() { return PromptSet::load(std::filesystem::path(MEDMSA_DATA) / "prompts"); }

SynthesisConfig fast_config() {
  SynthesisConfig c;
  c.samples = 200;
  c.threads = 2;
  c.deterministic_timing = true;
  return c;
}

}  // namespace

TEST(Prompts, LoadDropsHeaderAndFillsPlaceholders) {
  auto p = prompts();
  EXPECT_FALSE(p.translate.starts_with("#"));
  EXPECT_EQ(p.version.size(), 12u);
  std::string filled = fill(p.translate, {{"sentences", format_sentences(sean())}, {"queries", format_queries(sean())}});
  EXPECT_NE(filled.find("Query 2: What ailment does Sean have?"), std::string::npos);
  EXPECT_EQ(filled.find("{{"), std::string::npos);
  EXPECT_THROW(fill("{{missing}}", {}), Error);
}

TEST(ParseTranslation, ReadsConditionsQueriesAndRequiredFunctions) {
  std::string why;
  auto t = parse_translation(kTranslation, sean(), &why);
  ASSERT_TRUE(t) << why;
  EXPECT_EQ(t->condition_statements,
            (std::vector<std::string>{"condition(has_chest_pain('sean'))", "condition(feels_lightheaded('sean'))"}));
  EXPECT_EQ(t->query_expressions.size(), 2u);
  EXPECT_EQ(t->required_functions,
            (std::set<std::string>{"has_chest_pain", "feels_lightheaded", "is_having_heart_attack", "has_ailment"}));
}

TEST(ParseTranslation, RejectsMalformedBlocks) {
  auto v = sean();
  std::string why;
  EXPECT_FALSE(parse_translation("// CONDITIONS\nhas_chest_pain('sean')\n// QUERIES\na()\nb()\n", v, &why));
  EXPECT_NE(why.find("not a condition"), std::string::npos);
  EXPECT_FALSE(parse_translation("// CONDITIONS\ncondition(a('sean'))\n// QUERIES\nb('sean')\n", v, &why));
  EXPECT_FALSE(parse_translation("// CONDITIONS\ncondition(a('sean')\n// QUERIES\nb()\nc()\n", v));
  EXPECT_FALSE(parse_translation("nothing useful", v));
}

TEST(ParseTranslation, SkipLines) {
  auto t = parse_translation("// CONDITIONS\ncondition(a('s'))\n// SKIP: It is raining.\n// QUERIES\nb('s')\nc('s')\n", sean());
  ASSERT_TRUE(t);
  EXPECT_EQ(t->skipped_sentences, std::vector<std::string>{"It is raining."});
  auto again = parse_translation(format_translation(*t), sean());
  ASSERT_TRUE(again);
  EXPECT_EQ(again->condition_statements, t->condition_statements);
  EXPECT_EQ(again->skipped_sentences, t->skipped_sentences);
}

TEST(ParseSketch, TraceAndCoverage) {
  auto t = *parse_translation(kTranslation, sean());
  std::string why;
  auto s = parse_sketch(kSketch, t, &why);
  ASSERT_TRUE(s) << why;
  EXPECT_EQ(s->concept_trace.size(), 4u);
  EXPECT_EQ(s->concept_trace[1].depends_on, std::vector<std::string>{"has_ailment"});
  EXPECT_EQ(s->prose, "Chest pain and lightheadedness both depend on the ailment.");

  auto round = parse_sketch(format_sketch(*s), t);
  ASSERT_TRUE(round);
  EXPECT_EQ(round->concept_trace, s->concept_trace);

  std::string missing = std::regex_replace(std::string(kSketch), std::regex("- feels_lightheaded\n  - depends on: has_ailment\n"), "");
  EXPECT_FALSE(parse_sketch(missing, t, &why));
  EXPECT_NE(why.find("feels_lightheaded"), std::string::npos);

  std::string dangling = std::string(kSketch);
  dangling.replace(dangling.find("depends on: has_ailment"), 23, "depends on: age");
  EXPECT_FALSE(parse_sketch(dangling, t));
  EXPECT_FALSE(parse_sketch("no trace at all", t));
}

TEST(ParseScore, LastScoreClamped) {
  EXPECT_EQ(parse_score("SCORE: 0.7"), 0.7);
  EXPECT_EQ(parse_score("SCORE: 0.2 then revised SCORE: 0.9"), 0.9);
  EXPECT_EQ(parse_score("SCORE: 3"), 1.0);
  EXPECT_EQ(parse_score("looks fine"), 0.0);
  EXPECT_EQ(parse_score("**SCORE:** 0.55"), 0.55);
  EXPECT_EQ(parse_score("SCORE: **0.55"), 0.55);
}

TEST(ExtractProgram, RequiresBothDelimiters) {
  EXPECT_EQ(extract_program("x<START_WEBPPL_MODEL>abc<END_WEBPPL_MODEL>y"), "abc");
  EXPECT_THROW(extract_program("<START_WEBPPL_MODEL>abc"), DelimitersMissing);
  EXPECT_THROW(extract_program("abc<END_WEBPPL_MODEL>"), DelimitersMissing);
}

TEST(PatchConditions, UncommentsTopLevelConditionsOnly) {
  std::string src =
      "var model = function(){\n"
      "  var f = function(p){\n"
      "    // condition(inner(p))\n"
      "    return true\n"
      "  }\n"
      "  // condition(f('sean'));\n"
      "  // condition(f('sean') && f('x'))\n"
      "  // a note about condition(f)\n"
      "  var s = '{';\n"
      "  // condition(g('sean'))\n"
      "  return {query1: f('sean')}\n"
      "}\n";
  std::string patched = patch_conditions(src);
  EXPECT_NE(patched.find("    // condition(inner(p))\n"), std::string::npos);
  EXPECT_NE(patched.find("\n  condition(f('sean'));\n"), std::string::npos);
  EXPECT_NE(patched.find("\n  condition(f('sean') && f('x'))\n"), std::string::npos);
  EXPECT_NE(patched.find("  // a note about condition(f)\n"), std::string::npos);
  // The brace inside the string literal does not shift the depth.
  EXPECT_NE(patched.find("\n  condition(g('sean'))\n"), std::string::npos);
}

TEST(PatchConditions, IdempotentAndIdentityOnCleanSources) {
  std::vector<std::string> commented;
  for (double p : {0.05, 0.1, 0.2, 0.3, 0.4})
    commented.push_back(model(p, "  // condition(has_chest_pain('sean'))\n  //condition(feels_lightheaded('sean'));\n"));
  for (const auto& src : commented) {
    std::string once = patch_conditions(src);
    EXPECT_NE(once, src);
    EXPECT_EQ(patch_conditions(once), once);
    auto program = ppl::parse(once);
    EXPECT_EQ(program.conditions().size(), 2u);
  }
  int clean = 0;
  for (const auto& entry : std::filesystem::directory_iterator(std::string(MEDMSA_TEST_DATA) + "/corpus")) {
    std::string src = read_file(entry.path());
    EXPECT_EQ(patch_conditions(src), src) << entry.path();
    ++clean;
  }
  for (double p = 0.01; clean < 20; p += 0.03, ++clean) EXPECT_EQ(patch_conditions(model(p)), model(p));
  std::string marie = test_data("programs/marie.medppl");
  EXPECT_EQ(patch_conditions(marie), marie);
}

namespace {

// Backend that answers from a script and also counts calls per stage.
Json base_script(std::vector<std::string> code) {
  return Json{{"id", "test"},
              {"responses", {{"translate", {kTranslation}}, {"sketch", {kSketch}}, {"code", code}}},
              {"score",
               {{"rules", Json::array({Json{{"match", "// semantic: bad"}, {"text", "Weak. SCORE: 0.1"}}})},
                {"default", "SCORE: 0.8"}}}};
}

}  // namespace

TEST(CheckCandidate, StatusOrder) {
  auto p = prompts();
  auto cfg = fast_config();
  lm::Client lm(std::make_shared<lm::ScriptedBackend>(base_script({""})));
  auto v = sean();

  EXPECT_EQ(check_candidate(model(0.1), v, lm, p, cfg, 1, 1).status, CandidateStatus::Compiled);

  auto bad = check_candidate("// semantic: bad\n" + model(0.1), v, lm, p, cfg, 1, 1);
  EXPECT_EQ(bad.status, CandidateStatus::SemanticRejected);
  EXPECT_DOUBLE_EQ(bad.semantic_score, 0.1);

  auto syntax = check_candidate(model(0.1) + "var = ;", v, lm, p, cfg, 1, 1);
  EXPECT_EQ(syntax.status, CandidateStatus::ParseFailed);
  ASSERT_FALSE(syntax.diagnostics.empty());
  EXPECT_EQ(syntax.diagnostics[0].code, "SyntaxError");

  std::string no_query = std::regex_replace(model(0.1), std::regex(", query2: has_ailment\\('sean'\\)"), "");
  auto missing = check_candidate(no_query, v, lm, p, cfg, 1, 1);
  EXPECT_EQ(missing.status, CandidateStatus::ValidateFailed);
  EXPECT_EQ(missing.diagnostics.back().code, "MissingQuery");

  auto unknown = check_candidate(model(0.1, "  condition(has_fever('sean'))\n"), v, lm, p, cfg, 1, 1);
  EXPECT_EQ(unknown.status, CandidateStatus::ParseFailed);
  EXPECT_EQ(unknown.diagnostics[0].code, "UnknownIdentifier");

  auto arity = check_candidate(model(0.1, "  condition(flip(0.5, 0.2))\n"), v, lm, p, cfg, 1, 1);
  EXPECT_EQ(arity.status, CandidateStatus::ValidateFailed);
  EXPECT_EQ(arity.diagnostics[0].code, "ArityMismatch");

  auto impossible = model(0.1, "  condition(has_chest_pain('sean') && !has_chest_pain('sean'))\n");
  auto small = cfg;
  small.init_budget.max_proposals = 500;
  auto b = check_candidate(impossible, v, lm, p, small, 1, 1);
  EXPECT_EQ(b.status, CandidateStatus::BudgetFailed);
  EXPECT_EQ(b.init_proposals, 500u);
  EXPECT_EQ(b.diagnostics[0].code, "BudgetExhausted");

  auto broken = model(0.1, "  condition(flip(2))\n");
  auto r = check_candidate(broken, v, lm, p, cfg, 1, 1);
  EXPECT_EQ(r.status, CandidateStatus::BudgetFailed);
  EXPECT_EQ(r.diagnostics[0].code, "RuntimeError");
}

TEST(Stages, BestOfNPicksHighestScoreLowestIndexOnTies) {
  auto p = prompts();
  auto v = sean();
  std::string t2 = std::regex_replace(std::string(kTranslation), std::regex("condition\\(feels_lightheaded"),
                                      "condition(is_lightheaded");
  Json script = base_script({""});
  script["responses"]["translate"] = {"garbage", kTranslation, t2, t2};
  script["score"]["rules"].push_back(Json{{"match", "is_lightheaded"}, {"text", "SCORE: 0.9"}});
  lm::Client lm(std::make_shared<lm::ScriptedBackend>(script));
  auto t = translate(v, lm, p, 4, 0);
  EXPECT_EQ(t.chosen_index, 2u);
  EXPECT_DOUBLE_EQ(t.lm_score, 0.9);

  script["responses"]["translate"] = {"garbage", "junk"};
  lm::Client none(std::make_shared<lm::ScriptedBackend>(script));
  EXPECT_THROW(translate(v, none, p, 2, 0), NoParsableCandidate);
}

TEST(Stages, SampleIndicesFollowCandidateSlots) {
  auto p = prompts();
  auto cfg = fast_config();
  lm::Client lm(std::make_shared<lm::ScriptedBackend>(base_script({wrap(model(0.1))})));
  run_pipeline(sean(), 3, 7, cfg, lm, p);
  std::map<lm::Stage, std::set<std::uint64_t>> indices;
  for (const auto& c : lm.calls()) indices[c.stage].insert(c.sample_index);
  EXPECT_EQ(indices[lm::Stage::Translate], (std::set<std::uint64_t>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11}));
  EXPECT_EQ(indices[lm::Stage::Sketch], (std::set<std::uint64_t>{0, 1, 2, 3, 4, 5, 6, 7, 8}));
  EXPECT_EQ(indices[lm::Stage::SynthesizeCode], (std::set<std::uint64_t>{0, 1, 2}));
  EXPECT_EQ(indices[lm::Stage::Score], (std::set<std::uint64_t>{0}));
}

TEST(Stages, SharedTranslationIsComputedOnce) {
  auto p = prompts();
  auto cfg = fast_config();
  cfg.share_translation = true;
  lm::Client lm(std::make_shared<lm::ScriptedBackend>(base_script({wrap(model(0.1))})));
  run_pipeline(sean(), 3, 7, cfg, lm, p);
  std::size_t translate_calls = 0;
  for (const auto& c : lm.calls()) translate_calls += c.stage == lm::Stage::Translate;
  EXPECT_EQ(translate_calls, cfg.translations);
}

TEST(Pipeline, MixedOutcomes) {
  auto p = prompts();
  auto cfg = fast_config();
  cfg.init_budget.max_proposals = 2000;
  std::vector<std::string> code = {
      wrap(model(0.1)),
      wrap("// semantic: bad\n" + model(0.1)),
      wrap(model(0.1) + "var = ;"),
      "I forgot the delimiters\n" + model(0.1),
      wrap(model(0.1, "  condition(has_chest_pain('sean') && !has_chest_pain('sean'))\n")),
      wrap(model(0.3, "  // condition(has_chest_pain('sean'))\n  // condition(feels_lightheaded('sean'))\n")),
  };
  lm::Client lm(std::make_shared<lm::ScriptedBackend>(base_script(code)));
  std::mutex mu;
  std::map<std::size_t, std::vector<std::string>> events;
  auto run = run_pipeline(sean(), code.size(), 7, cfg, lm, p, [&](std::size_t i, const std::string& stage) {
    std::lock_guard lock(mu);
    events[i].push_back(stage);
  });
  ASSERT_EQ(run.candidates.size(), 6u);
  std::vector<CandidateStatus> statuses;
  for (const auto& c : run.candidates) statuses.push_back(c.status);
  EXPECT_EQ(statuses, (std::vector<CandidateStatus>{CandidateStatus::Compiled, CandidateStatus::SemanticRejected,
                                                    CandidateStatus::ParseFailed, CandidateStatus::ParseFailed,
                                                    CandidateStatus::BudgetFailed, CandidateStatus::Compiled}));
  EXPECT_EQ(run.candidates[3].failed_stage, "code");
  EXPECT_EQ(run.candidates[3].diagnostics[0].code, "DelimitersMissing");
  EXPECT_NE(run.candidates[5].patched_source, run.candidates[5].source);
  EXPECT_EQ(run.valid_models().size(), 2u);
  for (const auto* m : run.valid_models()) {
    ASSERT_TRUE(m->sample_set);
    EXPECT_EQ(m->sample_set->accepted_count, 200u);
    EXPECT_EQ(m->sample_set->model_id, std::to_string(m->index));
    EXPECT_EQ(m->sample_set->wall_time, 0);
  }
  EXPECT_EQ(events[1], (std::vector<std::string>{"translate", "sketch", "code", "checks", "sampling", "done"}));
  EXPECT_EQ(events[4], (std::vector<std::string>{"translate", "sketch", "code", "done"}));
}

TEST(Pipeline, DeterministicAcrossThreadCounts) {
  auto p = prompts();
  auto script = base_script({wrap(model(0.1)), wrap(model(0.2)), wrap(model(0.3))});
  std::vector<Json> outputs;
  for (std::size_t threads : {1u, 3u}) {
    auto cfg = fast_config();
    cfg.threads = threads;
    lm::Client lm(std::make_shared<lm::ScriptedBackend>(script));
    auto run = run_pipeline(sean(), 3, 7, cfg, lm, p);
    Json j = Json::array();
    for (const auto& c : run.candidates) j.push_back(ppl::to_json(*c.sample_set));
    outputs.push_back(j);
  }
  EXPECT_EQ(outputs[0], outputs[1]);
}

TEST(Pipeline, TransportErrorsAbortTheRun) {
  auto p = prompts();
  lm::Client lm(std::make_shared<lm::ForbiddenBackend>());
  EXPECT_THROW(run_pipeline(sean(), 2, 7, fast_config(), lm, p), lm::NetworkForbidden);
}
