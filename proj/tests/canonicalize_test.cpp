#include <gtest/gtest.h>

#include <filesystem>

#include "medmsa/canonicalize/mapping.hpp"
#include "medmsa/lm/scripted.hpp"
#include "medmsa/synthesis/pipeline.hpp"

using namespace medmsa;
using namespace medmsa::canonicalize;

namespace {

std::string prompt_template() {
  return synthesis::PromptSet::load(std::filesystem::path(MEDMSA_DATA) / "prompts").canonicalize;
}

lm::Client answering(const std::string& text) {
  return lm::Client(std::make_shared<lm::ScriptedBackend>(
      Json{{"id", "canon"}, {"responses", {{"canonicalize", Json::array({text})}}}}));
}

ppl::SampleSet samples(const std::vector<std::pair<std::string, int>>& counts) {
  ppl::SampleSet s;
  s.query_names = {"query1", "query2"};
  s.values.resize(2);
  for (const auto& [v, n] : counts) {
    for (int i = 0; i < n; ++i) {
      s.values[0].push_back(ppl::Value(i % 2 == 0));
      s.values[1].push_back(ppl::Value(v));
    }
  }
  s.accepted_count = s.values[1].size();
  return s;
}

std::map<std::string, std::size_t> counts(const ppl::SampleSet& s, const std::string& query) {
  std::map<std::string, std::size_t> out;
  for (const auto& v : *s.find(query)) ++out[ppl::canonical_string(v)];
  return out;
}

}  // namespace

TEST(Normalize, LowercaseUnderscoresTrim) {
  EXPECT_EQ(normalize("  Heart_Attack "), "heart attack");
  EXPECT_EQ(normalize("collapsed__lung"), "collapsed lung");
  EXPECT_EQ(normalize("Other"), "other");
  EXPECT_TRUE(is_catch_all(normalize("Other")));
}

TEST(BuildMapping, SynonymsMergeIntoAnInputName) {
  auto lm = answering(R"({"collapsed lung": "pneumothorax", "pneumothorax": "pneumothorax"})");
  auto m = build_mapping({"collapsed lung", "pneumothorax"}, lm, prompt_template(), {});
  EXPECT_EQ(m.canonical("collapsed lung"), "pneumothorax");
  EXPECT_EQ(m.canonical("pneumothorax"), "pneumothorax");
  EXPECT_EQ(m.entries.at("collapsed lung").provenance, Provenance::LM);
  EXPECT_FALSE(m.lm_unparsable);
  EXPECT_EQ(m.source_prompt_hash.size(), 64u);
}

TEST(BuildMapping, DistinctConditionsStayDistinct) {
  auto lm = answering(R"(Here you go: {"respiratory illness": "respiratory illness", "pneumonia": "pneumonia"})");
  auto m = build_mapping({"respiratory illness", "pneumonia"}, lm, prompt_template(), {});
  EXPECT_EQ(m.targets(), (std::set<std::string>{"respiratory illness", "pneumonia"}));
}

TEST(BuildMapping, OverridesWinAndMissingEntriesAreIdentity) {
  auto lm = answering(R"({"anxiety disorder": "anxiety attack", "heart attack": "heart attack"})");
  std::map<std::string, std::string> overrides{{"anxiety disorder", "anxiety"}, {"anxiety attack", "anxiety"}};
  auto m = build_mapping({"anxiety disorder", "anxiety attack", "heart_attack", "angina"}, lm, prompt_template(),
                         overrides);
  EXPECT_EQ(m.canonical("anxiety disorder"), "anxiety");
  EXPECT_EQ(m.canonical("anxiety attack"), "anxiety");
  EXPECT_EQ(m.entries.at("anxiety attack").provenance, Provenance::Override);
  EXPECT_EQ(m.canonical("heart_attack"), "heart attack");
  EXPECT_EQ(m.entries.at("angina").canonical, "angina");
  EXPECT_EQ(m.entries.at("angina").provenance, Provenance::Identity);
}

TEST(BuildMapping, LmCannotInventNamesOrMoveHeartAttack) {
  auto lm = answering(R"({"collapsed lung": "lung problem", "heart attack": "cardiac event", "pneumothorax": "collapsed lung"})");
  auto m = build_mapping({"collapsed lung", "heart attack", "pneumothorax"}, lm, prompt_template(), {});
  EXPECT_EQ(m.canonical("collapsed lung"), "collapsed lung");
  EXPECT_EQ(m.canonical("heart attack"), "heart attack");
  EXPECT_EQ(m.canonical("pneumothorax"), "collapsed lung");
  EXPECT_EQ(m.warnings.size(), 2u);
  for (const auto& t : m.targets()) {
    EXPECT_TRUE(t == "collapsed lung" || t == "heart attack" || t == "pneumothorax");
    EXPECT_EQ(t.find('_'), std::string::npos);
  }
}

TEST(BuildMapping, ChainsAndCyclesResolveIdempotently) {
  auto lm = answering(R"({"a": "b", "b": "c", "x": "y", "y": "x"})");
  auto m = build_mapping({"a", "b", "c", "x", "y"}, lm, prompt_template(), {});
  EXPECT_EQ(m.canonical("a"), "c");
  EXPECT_EQ(m.canonical("b"), "c");
  EXPECT_EQ(m.canonical("x"), m.canonical("y"));
  for (const auto& [raw, e] : m.entries) {
    if (m.entries.contains(e.canonical)) {
      EXPECT_EQ(m.canonical(e.canonical), e.canonical) << raw;
    }
  }
}

TEST(BuildMapping, UnparsableAnswerFallsBackToIdentity) {
  auto lm = answering("I would group them as follows: lungs and hearts.");
  auto m = build_mapping({"Collapsed_Lung", "pneumothorax"}, lm, prompt_template(), {});
  EXPECT_TRUE(m.lm_unparsable);
  EXPECT_FALSE(m.warnings.empty());
  EXPECT_EQ(m.canonical("Collapsed_Lung"), "collapsed lung");
  EXPECT_EQ(m.entries.at("pneumothorax").provenance, Provenance::Identity);

  auto non_string = answering(R"({"pneumothorax": 3})");
  EXPECT_TRUE(build_mapping({"pneumothorax"}, non_string, prompt_template(), {}).lm_unparsable);
  EXPECT_THROW(build_mapping({}, non_string, prompt_template(), {}), Error);
}

TEST(ApplyMapping, ConservesCountsAndPassesBooleans) {
  auto lm = answering(R"({"collapsed lung": "pneumothorax"})");
  auto m = build_mapping({"pneumothorax", "collapsed lung", "heart_attack"}, lm, prompt_template(), {});
  auto s = samples({{"pneumothorax", 2000}, {"collapsed lung", 500}, {"heart_attack", 5}});
  auto out = apply_mapping(s, m, "query2");
  EXPECT_EQ(counts(out, "query2"), (std::map<std::string, std::size_t>{{"pneumothorax", 2500}, {"heart attack", 5}}));
  EXPECT_EQ(counts(out, "query1"), counts(s, "query1"));
  EXPECT_EQ(out.accepted_count, s.accepted_count);
  // Original set untouched.
  EXPECT_EQ(counts(s, "query2").at("collapsed lung"), 500u);

  auto unknown = samples({{"angina", 3}});
  EXPECT_THROW(apply_mapping(unknown, m, "query2"), UnmappedCategory);
}

TEST(Overrides, ShippedFileYieldsThreeTargets) {
  auto overrides = load_overrides(std::filesystem::path(MEDMSA_DATA) / "overrides.json");
  auto lm = answering(R"({"collapsed lung": "pneumothorax", "pneumothorax": "pneumothorax",
                          "heart attack": "heart attack", "anxiety disorder": "anxiety disorder",
                          "anxiety attack": "anxiety disorder"})");
  std::set<std::string> raws{"collapsed lung", "pneumothorax", "heart_attack", "anxiety disorder", "anxiety attack"};
  auto m = build_mapping(raws, lm, prompt_template(), overrides);
  EXPECT_EQ(m.targets(), (std::set<std::string>{"pneumothorax", "heart attack", "anxiety"}));
}

TEST(ExtendMapping, KeepsExistingEntries) {
  auto first = answering(R"({"collapsed lung": "pneumothorax"})");
  auto base = build_mapping({"collapsed lung", "pneumothorax"}, first, prompt_template(), {});
  auto second = answering(R"({"lung collapse": "pneumothorax", "pneumothorax": "pneumothorax"})");
  auto m = extend_mapping(base, {"lung collapse", "pneumothorax", "angina"}, second, prompt_template(), {});
  EXPECT_EQ(m.canonical("lung collapse"), "pneumothorax");
  EXPECT_EQ(m.canonical("angina"), "angina");
  EXPECT_EQ(m.entries.at("collapsed lung"), base.entries.at("collapsed lung"));
  auto unchanged = extend_mapping(base, {"pneumothorax"}, second, prompt_template(), {});
  EXPECT_EQ(unchanged, base);
}

TEST(MappingJson, RoundTrip) {
  auto lm = answering(R"({"collapsed lung": "pneumothorax"})");
  auto m = build_mapping({"collapsed lung", "pneumothorax", "Other"}, lm, prompt_template(), {{"other", "other"}});
  EXPECT_EQ(mapping_from_json(to_json(m)), m);
  EXPECT_THROW(mapping_from_json(Json{{"entries", 3}}), Error);
}
