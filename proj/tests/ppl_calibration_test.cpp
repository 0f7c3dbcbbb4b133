#include <gtest/gtest.h>

#include <filesystem>

#include "medmsa/ppl/inference.hpp"
#include "medmsa/ppl/validate.hpp"
#include "test_util.hpp"

using namespace medmsa::ppl;

namespace {

std::vector<std::filesystem::path> corpus() {
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(std::string(MEDMSA_TEST_DATA) + "/corpus")) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST(Calibration, CorpusIsLargeEnough) { EXPECT_GE(corpus().size(), 10u); }

TEST(Calibration, SamplerAgreesWithEnumeration) {
  for (const auto& path : corpus()) {
    SCOPED_TRACE(path.filename().string());
    auto p = parse(read_file(path.string()));
    ASSERT_TRUE(validate(p).empty());
    auto exact = enumerate(p);
    SampleOptions o;
    o.target_samples = 50'000;
    o.seed = 2024;
    auto set = rejection_sample(p, o);
    ASSERT_EQ(set.accepted_count, 50'000u);
    for (const auto& q : p.queries()) {
      double tv = total_variation(set.frequencies(q.name), *exact.find(q.name));
      EXPECT_LE(tv, 0.02) << q.name;
    }
  }
}

TEST(RoundTrip, RenderParseIsIdentityOnCorpus) {
  auto paths = corpus();
  paths.push_back(std::string(MEDMSA_TEST_DATA) + "/programs/marie.medppl");
  for (const auto& path : paths) {
    SCOPED_TRACE(path.filename().string());
    auto p = parse(read_file(path.string()));
    auto text = render(p);
    auto q = parse(text);
    EXPECT_TRUE(structurally_equal(p, q));
    EXPECT_EQ(render(q), text);
  }
}
