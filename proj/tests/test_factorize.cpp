#include <gtest/gtest.h>

#include <filesystem>

#include "fnmt/factorize.hpp"
#include "fnmt/random.hpp"

using namespace fnmt;

TEST(DeduceCase, Classes) {
  auto d = deduce_case("NEURAL");
  EXPECT_EQ(d.form, "neural");
  EXPECT_EQ(d.factor, CaseFactor::Uppercased);
  d = deduce_case("Wi");
  EXPECT_EQ(d.form, "wi");
  EXPECT_EQ(d.factor, CaseFactor::Capitalized);
  d = deduce_case(",");
  EXPECT_EQ(d.form, ",");
  EXPECT_EQ(d.factor, CaseFactor::Undefined);
  EXPECT_EQ(deduce_case("the").factor, CaseFactor::Lowercased);
}

TEST(DeduceCase, CornerCases) {
  EXPECT_EQ(deduce_case("I").factor, CaseFactor::Capitalized);
  EXPECT_EQ(deduce_case("i").factor, CaseFactor::Lowercased);
  EXPECT_EQ(deduce_case("3D").factor, CaseFactor::Capitalized);
  EXPECT_EQ(deduce_case("U2").factor, CaseFactor::Capitalized);
  EXPECT_EQ(deduce_case("A-B").factor, CaseFactor::Uppercased);
  EXPECT_THROW(deduce_case("l'Air"), MixedCaseError);
  EXPECT_EQ(deduce_case("ÉCOLE").form, "école");
  EXPECT_EQ(deduce_case("123").factor, CaseFactor::Undefined);
  EXPECT_EQ(deduce_case("").factor, CaseFactor::Undefined);
}

TEST(DeduceCase, MixedCaseThrows) {
  EXPECT_THROW(deduce_case("WiFi"), MixedCaseError);
  EXPECT_THROW(deduce_case("iPhone"), MixedCaseError);
  EXPECT_THROW(deduce_case("McDonald"), MixedCaseError);
  try {
    deduce_case("eBay");
  } catch (const MixedCaseError& e) {
    EXPECT_EQ(e.token(), "eBay");
  }
}

TEST(RecombineCase, InverseExamples) {
  EXPECT_EQ(recombine_case("neural", CaseFactor::Uppercased), "NEURAL");
  EXPECT_EQ(recombine_case("wi", CaseFactor::Capitalized), "Wi");
  EXPECT_EQ(recombine_case(",", CaseFactor::Undefined), ",");
  EXPECT_EQ(recombine_case("the", CaseFactor::Lowercased), "the");
  EXPECT_EQ(recombine_case("3d", CaseFactor::Capitalized), "3D");
  EXPECT_EQ(recombine_case("école", CaseFactor::Capitalized), "École");
}

TEST(RecombineCase, RoundTripProperty) {
  const std::string chars[] = {"a", "b", "z", "A", "B", "Z", "é", "É", "1", "-", "'", "ø", "Ø"};
  Rng rng(3);
  int checked = 0;
  for (int trial = 0; trial < 5000; ++trial) {
    std::string token;
    const auto len = 1 + uniform_index(rng, 6);
    for (std::uint64_t i = 0; i < len; ++i) token += chars[uniform_index(rng, std::size(chars))];
    CaseDeduction d;
    try {
      d = deduce_case(token);
    } catch (const MixedCaseError&) {
      continue;
    }
    EXPECT_EQ(recombine_case(d.form, d.factor), token);
    ++checked;
  }
  EXPECT_GT(checked, 1000);
}

TEST(RecombineCase, FactorRoundTripOnForms) {
  for (std::string form : {"a", "neural", "x1", "école", "l'air", "ab-cd"}) {
    for (auto f : {CaseFactor::Uppercased, CaseFactor::Capitalized, CaseFactor::Lowercased}) {
      const auto surface = recombine_case(form, f);
      auto expected = f;
      if (f == CaseFactor::Uppercased && form.size() == 1) expected = CaseFactor::Capitalized;
      if (f == CaseFactor::Uppercased && form == "x1") expected = CaseFactor::Capitalized;
      EXPECT_EQ(deduce_case(surface).factor, expected) << surface;
    }
  }
}

TEST(Labels, ParseAndPrint) {
  for (std::size_t i = 0; i < kCaseLabels.size(); ++i)
    EXPECT_EQ(to_string(parse_case_factor(kCaseLabels[i])), kCaseLabels[i]);
  for (std::size_t i = 0; i < kGenderLabels.size(); ++i)
    EXPECT_EQ(to_string(parse_gender_factor(kGenderLabels[i])), kGenderLabels[i]);
  EXPECT_THROW(parse_case_factor("shouting"), Error);
  EXPECT_EQ(case_stream().labels.size(), 4u);
  EXPECT_EQ(gender_stream().labels.size(), 3u);
  EXPECT_EQ(case_stream().index_of("lowercased"), 2);
}

TEST(FactorCase, ContinuationMarkersAreIgnored) {
  const auto f = factor_case({"Wi@@", "Fi", "NEU@@", "RAL", ","});
  ASSERT_EQ(f.size(), 5u);
  EXPECT_EQ(f[0].form, "wi@@");
  EXPECT_EQ(f[0].factors, std::vector<int>{static_cast<int>(CaseFactor::Capitalized)});
  EXPECT_EQ(f[2].form, "neu@@");
  EXPECT_EQ(f[2].factors[0], static_cast<int>(CaseFactor::Uppercased));
  EXPECT_EQ(f[4].factors[0], static_cast<int>(CaseFactor::Undefined));
  EXPECT_EQ(recombine_case(f), (Sentence{"Wi@@", "Fi", "NEU@@", "RAL", ","}));
}

TEST(Gender, AnnotateAndBroadcast) {
  const GenderLexicon lex({{"chanteuse", GenderFactor::Feminine}, {"chanteur", GenderFactor::Masculine}});
  auto a = annotate_gender({"chanteuse", "table", "Chanteur"}, lex);
  EXPECT_EQ(a[0].form, "chanteuse");
  EXPECT_EQ(a[0].factors[0], static_cast<int>(GenderFactor::Feminine));
  EXPECT_EQ(a[1].factors[0], static_cast<int>(GenderFactor::Unknown));
  EXPECT_EQ(a[2].form, "Chanteur");
  EXPECT_EQ(a[2].factors[0], static_cast<int>(GenderFactor::Masculine));
  EXPECT_EQ(annotate_gender({"table"}, GenderLexicon{})[0].factors[0], static_cast<int>(GenderFactor::Unknown));

  EXPECT_EQ(broadcast_factors(GenderFactor::Feminine, {"chant@@", "euse"}),
            (std::vector<GenderFactor>{GenderFactor::Feminine, GenderFactor::Feminine}));
  EXPECT_EQ(broadcast_factors(GenderFactor::Unknown, {"x"}), std::vector<GenderFactor>{GenderFactor::Unknown});
  EXPECT_EQ(broadcast_factors(GenderFactor::Masculine, {"a@@", "b@@", "c"}).size(), 3u);
  EXPECT_THROW(broadcast_factors(GenderFactor::Masculine, {}), Error);
}

TEST(Gender, LexiconValidationAndIo) {
  EXPECT_THROW(GenderLexicon({{"x", GenderFactor::Unknown}}), Error);
  const GenderLexicon lex({{"chanteuse", GenderFactor::Feminine}, {"chanteur", GenderFactor::Masculine}});
  const auto p = std::filesystem::temp_directory_path() / "fnmt_lexicon.tsv";
  lex.save(p);
  EXPECT_EQ(GenderLexicon::load(p).entries(), lex.entries());
  std::filesystem::remove(p);
}

TEST(FactoredFormat, EscapingRoundTrip) {
  for (std::string form : {"plain", "a|b", "back\\slash", "\\|", "|", "x\\"})
    EXPECT_EQ(unescape_form(escape_form(form)), form);
  EXPECT_EQ(escape_form("a|b"), "a\\|b");

  const std::vector<FactorStream> streams{case_stream()};
  const FactoredSentence s{{"neural", {0}}, {"a|b", {2}}, {",", {3}}};
  const auto line = format_factored(s, streams);
  EXPECT_EQ(line, "neural|uppercased a\\|b|lowercased ,|undefined");
  EXPECT_EQ(parse_factored(line, streams), s);
  EXPECT_THROW(parse_factored("neural", streams), Error);
  EXPECT_THROW(parse_factored("neural|bogus", streams), Error);
  EXPECT_THROW(parse_factored("neural|uppercased|lowercased", streams), Error);
  EXPECT_TRUE(parse_factored("", streams).empty());
}

TEST(FactoredFormat, FileRoundTrip) {
  const std::vector<FactorStream> streams{gender_stream()};
  const std::vector<FactoredSentence> doc{{{"chanteuse", {1}}, {"x", {2}}}, {}, {{"le", {0}}}};
  const auto p = std::filesystem::temp_directory_path() / "fnmt_factored.txt";
  write_factored(p, doc, streams);
  EXPECT_EQ(read_factored(p, streams), doc);
  std::filesystem::remove(p);
}
