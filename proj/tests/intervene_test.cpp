#include <gtest/gtest.h>

#include <filesystem>

#include "medmsa/fsutil.hpp"
#include "medmsa/intervene/intervene.hpp"
#include "medmsa/ppl/inference.hpp"
#include "run_helpers.hpp"

using namespace medmsa;
using namespace testing_helpers;
namespace fs = std::filesystem;

namespace {

ppl::Edit replace(std::size_t index, const std::string& expression) {
  ppl::Edit e;
  e.kind = ppl::Edit::Kind::ReplaceCondition;
  e.index = index;
  e.expression = expression;
  return e;
}

// Exact P(query1 = true) of a program.
double exact_heart_attack(const std::string& source) {
  auto d = ppl::enumerate(ppl::parse(source));
  return d.find("query1")->count("true") ? d.find("query1")->at("true") : 0.0;
}

std::map<std::string, double> as_map(const differential::DifferentialDistribution& d) {
  std::map<std::string, double> out;
  for (const auto& e : d.entries) out[e.category] = e.probability;
  return out;
}

class Intervene : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = new fs::path(temp_dir("intervene"));
    std::string bad = "// semantic: bad\n" + v2_discrete();
    dir_ = new fs::path(make_run(*root_, {v2_discrete(), bad, v2_discrete()}, 3, 5000));
  }
  static void TearDownTestSuite() {
    delete root_;
    delete dir_;
  }
  static fs::path* root_;
  static fs::path* dir_;
};

fs::path* Intervene::root_ = nullptr;
fs::path* Intervene::dir_ = nullptr;

}  // namespace

TEST(EditJson, RoundTripAndValidation) {
  for (const char* text : {R"j({"kind":"ReplaceCondition","target":{"index":1},"payload":"does_exercise('sean')","note":"n"})j",
                           R"j({"kind":"AddCondition","payload":"is_over_60('sean')"})j",
                           R"j({"kind":"RemoveCondition","target":2})j",
                           R"j({"kind":"ReplaceNumericLiteral","target":{"span":[10,14]},"payload":0.5})j"}) {
    auto e = intervene::edit_from_json(Json::parse(text));
    EXPECT_EQ(intervene::edit_from_json(intervene::to_json(e)), e) << text;
  }
  EXPECT_THROW(intervene::edit_from_json(Json::parse(R"j({"kind":"Nope"})j")), Error);
  EXPECT_THROW(intervene::edit_from_json(Json::parse(R"j({"kind":"AddCondition"})j")), Error);
  EXPECT_THROW(intervene::edit_from_json(Json::parse(R"j({"kind":"RemoveCondition"})j")), Error);
  EXPECT_THROW(intervene::edit_from_json(Json::parse(R"j({"kind":"ReplaceNumericLiteral","target":{"span":[1,2]},"payload":"x"})j")), Error);
  EXPECT_THROW(intervene::edit_from_json(Json::parse("[]")), Error);
}

TEST_F(Intervene, ExerciseFlipFollowsEnumeration) {
  auto before_exact = exact_heart_attack(v2_discrete());
  auto edit = replace(1, "does_exercise('sean')");
  auto edited_source = ppl::apply_edit(ppl::parse(v2_discrete()), edit).source();
  auto after_exact = exact_heart_attack(edited_source);
  ASSERT_LT(after_exact, before_exact);

  auto r = intervene::intervene(*dir_, "1", edit);
  EXPECT_FALSE(r.budget_exhausted);
  EXPECT_EQ(r.lineage, (std::vector<std::string>{"1", r.new_model_version_id}));
  EXPECT_LT(r.after[0].probability("true"), r.before[0].probability("true"));
  EXPECT_LT(r.after_ensemble[0].probability("true"), r.before_ensemble[0].probability("true"));

  // The sampled after-distribution agrees with exact enumeration.
  auto exact = ppl::enumerate(ppl::parse(edited_source));
  for (std::size_t q = 0; q < 2; ++q) {
    std::map<std::string, double> truth;
    for (const auto& [k, p] : exact.probabilities[q]) truth[canonicalize::normalize(k)] = p;
    EXPECT_LE(ppl::total_variation(as_map(r.after[q]), truth), 0.02) << q;
  }
}

TEST_F(Intervene, BeforeMatchesStoredSamples) {
  auto run = store::load_run(*dir_);
  auto r = intervene::intervene(*dir_, "3", replace(2, "!is_over_60('sean')"));
  auto stored = run.run.candidates[2].sample_set->frequencies("query1");
  EXPECT_EQ(r.before[0].probability("true"), stored["true"]);
  EXPECT_EQ(r.before_ensemble, run.differentials);
}

TEST_F(Intervene, BaseModelIsImmutable) {
  auto cdir = *dir_ / "candidates" / "1";
  std::string src = read_file(cdir / "model.patched.medppl");
  std::string samples = read_file(cdir / "samples.json");
  std::string manifest = read_file(*dir_ / "manifest.json");
  intervene::intervene(*dir_, "1", replace(0, "has_chest_pain('sean')"));
  EXPECT_EQ(read_file(cdir / "model.patched.medppl"), src);
  EXPECT_EQ(read_file(cdir / "samples.json"), samples);
  EXPECT_EQ(read_file(*dir_ / "manifest.json"), manifest);
}

TEST_F(Intervene, LineageReplaysToLeafSource) {
  auto first = intervene::intervene(*dir_, "1", replace(1, "does_exercise('sean')"));
  ppl::Edit add;
  add.kind = ppl::Edit::Kind::AddCondition;
  add.expression = "!has_chest_pain('bob')";
  auto second = intervene::intervene(*dir_, first.new_model_version_id, add);
  EXPECT_EQ(second.lineage, (std::vector<std::string>{"1", first.new_model_version_id, second.new_model_version_id}));
  EXPECT_EQ(second.before, first.after);

  auto program = ppl::parse(intervene::model_source(*dir_, "1"));
  for (const auto& e : intervene::edit_chain(*dir_, second.new_model_version_id)) program = ppl::apply_edit(program, e);
  EXPECT_EQ(program.source(), intervene::model_source(*dir_, second.new_model_version_id));

  auto listed = intervene::list_interventions(*dir_);
  EXPECT_GE(listed.size(), 2u);
  EXPECT_EQ(intervene::load_intervention(*dir_, second.new_model_version_id).lineage, second.lineage);
}

TEST_F(Intervene, UnsatisfiableEditFlagsBudget) {
  auto root = temp_dir("intervene_budget");
  lm::Client lm(v2_backend({v2_discrete()}));
  auto request = v2_request(1, 200);
  request.config.sample_budget.max_proposals = 20000;
  auto dir = store::persist_run(root, execute_run(request, lm, prompts()));
  auto r = intervene::intervene(dir, "1", replace(2, "is_over_60('sean') && !is_over_60('sean')"));
  EXPECT_TRUE(r.budget_exhausted);
  EXPECT_EQ(r.accepted_count, 0u);
  EXPECT_TRUE(r.after[0].entries.empty());
  EXPECT_EQ(r.after_ensemble[0].n_models, 0u);
  EXPECT_NO_THROW(store::load_run(dir));
}

TEST_F(Intervene, IdentityEditMatchesBeforeAtHighSampleCount) {
  auto root = temp_dir("intervene_identity");
  auto dir = make_run(root, {v2_discrete()}, 1, 50000);
  ppl::Edit remove;
  remove.kind = ppl::Edit::Kind::RemoveCondition;
  remove.index = 2;
  auto removed = intervene::intervene(dir, "1", remove);
  ppl::Edit add;
  add.kind = ppl::Edit::Kind::AddCondition;
  add.expression = "is_over_60('sean')";
  auto restored = intervene::intervene(dir, removed.new_model_version_id, add);
  for (std::size_t q = 0; q < 2; ++q)
    EXPECT_LE(ppl::total_variation(as_map(restored.after[q]), as_map(removed.before[q])), 0.02);
}

TEST_F(Intervene, Errors) {
  EXPECT_THROW(intervene::intervene(*dir_, "2", replace(0, "true")), intervene::ModelNotCompiled);
  EXPECT_THROW(intervene::intervene(*dir_, "9", replace(0, "true")), intervene::ModelNotFound);
  EXPECT_THROW(intervene::intervene(*dir_, "v999", replace(0, "true")), intervene::ModelNotFound);
  EXPECT_THROW(intervene::intervene(*dir_, "abc", replace(0, "true")), intervene::ModelNotFound);
  EXPECT_THROW(intervene::intervene(*dir_, "1", replace(7, "true")), ppl::EditTargetMissing);
  EXPECT_THROW(intervene::intervene(*dir_, "1", replace(0, "no_such_fn('sean')")), ppl::EditProducesInvalidProgram);
  EXPECT_THROW(intervene::intervene(*dir_, "1", replace(0, "flip(3)")), ppl::EditProducesInvalidProgram);
}
