#include <gtest/gtest.h>

#include "medmsa/ppl/program.hpp"
#include "medmsa/ppl/validate.hpp"
#include "test_util.hpp"

using namespace medmsa::ppl;

namespace {

std::vector<std::string> codes(const std::vector<Diagnostic>& ds) {
  std::vector<std::string> out;
  for (const auto& d : ds) out.push_back(d.code);
  return out;
}

}  // namespace

TEST(Parse, SingleConditionInWrappedModel) {
  auto p = parse(R"(
var model = function() {
  var has_chest_pain = mem(function(patient) { return flip(0.3) })
  condition(has_chest_pain('sean'))
  return {query1: has_chest_pain('sean')}
}
)");
  EXPECT_TRUE(p.wrapped());
  ASSERT_EQ(p.conditions().size(), 1u);
  EXPECT_EQ(p.source().substr(p.conditions()[0].statement.begin, p.conditions()[0].statement.size()),
            "condition(has_chest_pain('sean'))");
  EXPECT_EQ(p.definitions().size(), 1u);
  EXPECT_TRUE(p.definitions()[0].memoized);
}

TEST(Parse, EmptyBodyWithReturn) {
  auto p = parse("return {q: true}");
  EXPECT_FALSE(p.wrapped());
  EXPECT_EQ(p.conditions().size(), 0u);
  ASSERT_EQ(p.queries().size(), 1u);
  EXPECT_EQ(p.queries()[0].name, "q");
}

TEST(Parse, MarieExemplar) {
  auto p = parse(test_data("programs/marie.medppl"));
  EXPECT_EQ(p.conditions().size(), 2u);
  ASSERT_EQ(p.queries().size(), 2u);
  EXPECT_EQ(p.queries()[0].name, "query1");
  EXPECT_EQ(p.queries()[1].name, "query2");
  ASSERT_EQ(p.definitions().size(), 6u);
  std::vector<std::string> names;
  for (const auto& d : p.definitions()) names.push_back(d.name);
  EXPECT_EQ(names, (std::vector<std::string>{"recent_international_travel", "has_ailment", "has_dysentry",
                                             "fatigue_level", "has_extreme_fatigue", "has_ulcerative_colitis"}));
  EXPECT_TRUE(p.has_continuous());
  EXPECT_TRUE(validate(p).empty());
}

TEST(Parse, SyntaxErrorCarriesPosition) {
  try {
    parse("var x = flip(0.5\nreturn {q: x}");
    FAIL() << "expected SyntaxError";
  } catch (const SyntaxError& e) {
    EXPECT_EQ(e.code(), "SyntaxError");
    EXPECT_EQ(e.line(), 2);
    EXPECT_FALSE(e.expected().empty());
  }
}

TEST(Parse, UnknownIdentifier) {
  try {
    parse("condition(has_fever('sean'))\nreturn {q: true}");
    FAIL() << "expected UnknownIdentifier";
  } catch (const UnknownIdentifier& e) {
    EXPECT_EQ(e.name(), "has_fever");
    EXPECT_EQ(e.line(), 1);
  }
}

TEST(Parse, UnsupportedConstructsAreNamed) {
  const char* cases[] = {
      "let x = 1\nreturn {q: x}",
      "var x = 1\nx = 2\nreturn {q: x}",
      "var f = (a) => a\nreturn {q: f(1)}",
      "var x = 1\nx++\nreturn {q: x}",
      "for (var i = 0; i < 2; i = i + 1) {}\nreturn {q: 1}",
      "var xs = [1, 2]\nreturn {q: xs[0]}",
      "var r = {a: 1}\nreturn {q: r.a}",
      "function f() { return 1 }\nreturn {q: f()}",
      "return {q: null}",
  };
  for (const char* src : cases) {
    EXPECT_THROW(parse(src), UnsupportedConstruct) << src;
  }
}

TEST(Parse, ModelMustReturnRecord) {
  EXPECT_THROW(parse("var x = flip(0.5)\nreturn x"), medmsa::Error);
  EXPECT_THROW(parse("return {}"), medmsa::Error);
  EXPECT_THROW(parse("var x = 1"), medmsa::Error);
}

TEST(Parse, NumericLiteralSpansCoverSourceText) {
  auto p = parse("var a = flip(0.0001)\nvar b = categorical({ps: [1, 3], vs: ['x', 'y']})\nreturn {q: a, r: b}");
  ASSERT_EQ(p.numeric_literals().size(), 3u);
  const auto& first = p.numeric_literals()[0];
  EXPECT_EQ(p.source().substr(first.span.begin, first.span.size()), "0.0001");
  EXPECT_DOUBLE_EQ(first.value, 0.0001);
}

TEST(Parse, CommentsAreKept) {
  auto p = parse("// header\nvar a = flip(0.5) // trailing\n// condition(a)\nreturn {q: a}");
  ASSERT_EQ(p.comments().size(), 3u);
  EXPECT_EQ(p.comments()[2].text, "// condition(a)");
  EXPECT_TRUE(p.conditions().empty());
}

TEST(Parse, ConditionsMayBeCalledViaHelpersAndDirectivesDiscarded) {
  auto p = parse(R"(var model = function() {
  var x = flip(0.5);
  condition(x);
  return {q: x};
};
var dist = Infer({model: model, method: 'rejection', samples: 10});
viz.table(dist);
)");
  EXPECT_EQ(p.model_name(), "model");
  EXPECT_EQ(p.conditions().size(), 1u);
}

TEST(Validate, ArityMismatch) {
  auto ds = validate(parse("return {q: flip(0.2, 0.3)}"));
  EXPECT_EQ(codes(ds), std::vector<std::string>{"ArityMismatch"});
}

TEST(Validate, LengthMismatch) {
  auto ds = validate(parse("return {q: categorical({ps: [0.2, 0.3, 0.5], vs: ['a', 'b']})}"));
  EXPECT_EQ(codes(ds), std::vector<std::string>{"LengthMismatch"});
  auto via_vars = validate(parse("var ps = [1, 2, 3]\nvar vs = ['a', 'b']\nreturn {q: categorical({ps: ps, vs: vs})}"));
  EXPECT_EQ(codes(via_vars), std::vector<std::string>{"LengthMismatch"});
}

TEST(Validate, CategoricalNeedsBothFields) {
  EXPECT_EQ(codes(validate(parse("return {q: categorical({ps: [1]})}"))), std::vector<std::string>{"MissingField"});
}

TEST(Validate, ConditionMustBeBooleanWhenKnown) {
  EXPECT_EQ(codes(validate(parse("condition(1 + 2)\nreturn {q: true}"))),
            std::vector<std::string>{"ConditionNotBoolean"});
  EXPECT_EQ(codes(validate(parse("condition('yes')\nreturn {q: true}"))),
            std::vector<std::string>{"ConditionNotBoolean"});
  // Unknown static type is allowed through.
  EXPECT_TRUE(validate(parse("var f = function() { return flip(0.5) }\ncondition(f())\nreturn {q: true}")).empty());
}

TEST(Validate, GaussianArity) {
  EXPECT_EQ(codes(validate(parse("return {q: gaussian(0)}"))), std::vector<std::string>{"ArityMismatch"});
  EXPECT_TRUE(validate(parse("return {q: gaussian(0, 1) > 0}")).empty());
}

TEST(Render, RoundTripOnSamples) {
  const char* sources[] = {
      "return {q: true}",
      "var x = flip(0.5); var y = flip(0.5); condition(x || y); return {q: x}",
      "var a = -1 + -(2 * 3) - +4 % 5\nvar b = !(a > 0) ? 'no' : \"yes\"\nreturn {q: b, 'weird key': [a, {z: 1e-7}]}",
      "var f = mem(function(p) {\n if (p == 'a') { return 1 } else if (p == 'b') { return 2 } else { return 3 }\n})\n"
      "return {q: ['a', 'b'].includes('a') && f('a') === 1}",
  };
  for (const char* src : sources) {
    auto p = parse(src);
    auto text = render(p);
    auto again = parse(text);
    EXPECT_TRUE(structurally_equal(p, again)) << text;
    EXPECT_EQ(render(again), text);
  }
  auto marie = parse(test_data("programs/marie.medppl"));
  auto text = render(marie);
  EXPECT_TRUE(structurally_equal(marie, parse(text))) << text;
  EXPECT_EQ(render(parse(text)), text);
}

TEST(FreeIdentifiers, ExcludesPrimitivesAndBoundNames) {
  auto e = parse_expression("has_chest_pain('sean') && flip(0.5) && (function(x) { return x })(is_old('sean'))");
  EXPECT_EQ(free_identifiers(*e), (std::set<std::string>{"has_chest_pain", "is_old"}));
}
