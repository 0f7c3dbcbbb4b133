#pragma once

#include <filesystem>
#include <string>
#include <unistd.h>

#include "medmsa/json.hpp"
#include "medmsa/lm/scripted.hpp"
#include "medmsa/runner.hpp"
#include "test_util.hpp"

namespace testing_helpers {

using namespace medmsa;

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("medmsa_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline synthesis::Vignette sean_v2() {
  return synthesis::Vignette{"sean-2",
                             {"Sean has chest pain.", "He also feels lightheaded.", "Sean is over 60 years old.",
                              "Sean does not exercise."},
                             {"Is Sean having a heart attack?", "What ailment does Sean have?"}};
}

inline const char* v2_translation() {
  return "<START_LANGUAGE_TO_WEBPPL_CODE>\n// CONDITIONS\n"
         "condition(has_chest_pain('sean') && feels_lightheaded('sean'))\n"
         "condition(!does_exercise('sean'))\ncondition(is_over_60('sean'))\n\n"
         "// QUERIES\nis_having_heart_attack('sean')\nhas_ailment('sean')\n<END_LANGUAGE_TO_WEBPPL_CODE>";
}

inline const char* v2_sketch() {
  return "Age and exercise shape the ailment, which drives the symptoms.\n<START_CONCEPT_TRACE>\n"
         "- is_over_60\n- does_exercise\n  - depends on: is_over_60\n"
         "- has_ailment\n  - depends on: is_over_60, does_exercise\n"
         "- has_chest_pain\n  - depends on: has_ailment\n- feels_lightheaded\n  - depends on: has_ailment\n"
         "- is_having_heart_attack\n  - depends on: has_ailment\n<END_CONCEPT_TRACE>";
}

inline std::string v2_discrete() { return test_data("programs/sean_v2_discrete.medppl"); }

// Scripted backend answering every stage for vignette 2; `programs` are the
// raw code-stage completions, one per candidate slot.
inline std::shared_ptr<lm::ScriptedBackend> v2_backend(const std::vector<std::string>& programs) {
  Json code = Json::array();
  for (const auto& p : programs) code.push_back("<START_WEBPPL_MODEL>\n" + p + "<END_WEBPPL_MODEL>");
  return std::make_shared<lm::ScriptedBackend>(Json{
      {"id", "v2"},
      {"responses",
       {{"translate", {v2_translation()}},
        {"sketch", {v2_sketch()}},
        {"code", code},
        {"canonicalize", {R"({"heart attack": "heart attack", "panic attack": "panic attack"})"}}}},
      {"score", {{"rules", Json::array({Json{{"match", "// semantic: bad"}, {"text", "SCORE: 0.05"}}})},
                 {"default", "SCORE: 0.9"}}}});
}

inline synthesis::PromptSet prompts() {
  return synthesis::PromptSet::load(std::filesystem::path(MEDMSA_DATA) / "prompts");
}

inline RunRequest v2_request(std::size_t k, std::uint64_t samples) {
  RunRequest r;
  r.vignette = sean_v2();
  r.k = k;
  r.seed = 7;
  r.config.samples = samples;
  r.config.deterministic_timing = true;
  r.config.threads = 4;
  return r;
}

// Persists a run whose candidates all answer with `programs` (cycled).
inline std::filesystem::path make_run(const std::filesystem::path& root, const std::vector<std::string>& programs,
                                      std::size_t k, std::uint64_t samples) {
  lm::Client lm(v2_backend(programs));
  auto result = execute_run(v2_request(k, samples), lm, prompts());
  return store::persist_run(root, result);
}

}  // namespace testing_helpers
