#include <gtest/gtest.h>

#include <cmath>

#include "fnmt/datagen.hpp"
#include "fnmt/experiment.hpp"
#include "fnmt/metrics.hpp"

using namespace fnmt;

namespace {

ParallelCorpus cased_corpus(std::size_t n) {
  auto c = toy::copy_corpus(n, 30, 2, 5, 4);
  for (std::size_t i = 0; i < c.size(); i += 3) c.pairs[i].source[0][0] = 'Q';
  return c;
}

}  // namespace

TEST(RoundCount, HalvesAwayFromZero) {
  EXPECT_EQ(round_count(0.5), 1u);
  EXPECT_EQ(round_count(1.5), 2u);
  EXPECT_EQ(round_count(2.4999), 2u);
  EXPECT_EQ(round_count(0.0), 0u);
}

TEST(MakeUpr, ExactCounts) {
  UprRecord rec;
  const auto out = make_upr_corpus(cased_corpus(1000), {0.02, 0.5, 3}, &rec);
  EXPECT_EQ(rec.upper_source, 20u);
  EXPECT_EQ(rec.upper_both, 10u);
  const auto counts = upr_counts(out);
  EXPECT_EQ(counts.upper_source, 20u);
  EXPECT_EQ(counts.upper_both, 10u);
  EXPECT_DOUBLE_EQ(*upr(out), 0.5);
}

TEST(MakeUpr, Boundaries) {
  auto out = make_upr_corpus(cased_corpus(500), {0.1, 0.0, 1});
  EXPECT_EQ(upr_counts(out).upper_both, 0u);
  out = make_upr_corpus(cased_corpus(500), {0.1, 1.0, 1});
  EXPECT_EQ(upr_counts(out).upper_both, 50u);
  for (const auto& p : out.pairs)
    if (is_all_uppercased(p.source)) EXPECT_TRUE(is_all_uppercased(p.target));
}

TEST(MakeUpr, LowercasesEverythingElse) {
  UprRecord rec;
  const auto in = cased_corpus(200);
  const auto out = make_upr_corpus(in, {0.1, 0.4, 9}, &rec);
  ASSERT_EQ(out.size(), in.size());
  std::size_t upper = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    EXPECT_EQ(lowercase(out.pairs[i].source), lowercase(in.pairs[i].source));
    if (std::binary_search(rec.upper_source_indices.begin(), rec.upper_source_indices.end(), i)) {
      EXPECT_TRUE(is_all_uppercased(out.pairs[i].source));
      ++upper;
    } else {
      EXPECT_EQ(out.pairs[i].source, lowercase(in.pairs[i].source));
      EXPECT_EQ(out.pairs[i].target, lowercase(in.pairs[i].target));
    }
  }
  EXPECT_EQ(upper, 20u);
}

TEST(MakeUpr, SeedDeterminismAndWarnings) {
  const auto in = cased_corpus(40);
  EXPECT_EQ(make_upr_corpus(in, {0.25, 0.5, 5}), make_upr_corpus(in, {0.25, 0.5, 5}));
  EXPECT_NE(make_upr_corpus(in, {0.25, 0.5, 5}), make_upr_corpus(in, {0.25, 0.5, 6}));
  UprRecord rec;
  make_upr_corpus(in, {0.02, 0.5, 5}, &rec);
  EXPECT_FALSE(rec.warnings.empty());
  EXPECT_THROW(make_upr_corpus(in, {1.5, 0.5, 5}), Error);
  EXPECT_THROW(make_upr_corpus(in, {0.5, -0.1, 5}), Error);
}

TEST(Augment, Sizes) {
  const auto base = toy::copy_corpus(3200, 20, 2, 4, 1);
  EXPECT_EQ(augment_uppercase(base, {std::pow(2.0, -5) / 100, 1}).size(), 3201u);
  EXPECT_EQ(augment_uppercase(base, {0.0, 1}).pairs, base.pairs);
  const auto small = toy::copy_corpus(100, 20, 2, 4, 1);
  EXPECT_EQ(augment_uppercase(small, {0.32, 1}).size(), 132u);
  EXPECT_THROW(augment_uppercase(small, {-0.1, 1}), Error);
}

TEST(Augment, AppendsUppercasedCopiesOnly) {
  const auto base = cased_corpus(300);
  AugmentRecord rec;
  const auto out = augment_uppercase(base, {0.1, 2}, &rec);
  ASSERT_EQ(out.size(), 330u);
  for (std::size_t i = 0; i < base.size(); ++i) EXPECT_EQ(out.pairs[i], base.pairs[i]);
  for (std::size_t k = 0; k < rec.appended; ++k) {
    const auto& src = base.pairs[rec.sampled_indices[k]];
    EXPECT_EQ(out.pairs[base.size() + k].source, uppercase(src.source));
    EXPECT_EQ(out.pairs[base.size() + k].target, uppercase(src.target));
  }
  EXPECT_FALSE(rec.with_replacement);
  std::vector<std::size_t> idx = rec.sampled_indices;
  std::sort(idx.begin(), idx.end());
  EXPECT_EQ(std::adjacent_find(idx.begin(), idx.end()), idx.end());
}

TEST(Augment, WithReplacementAboveOne) {
  AugmentRecord rec;
  const auto out = augment_uppercase(toy::copy_corpus(10, 20, 2, 4, 1), {2.5, 2}, &rec);
  EXPECT_EQ(out.size(), 35u);
  EXPECT_TRUE(rec.with_replacement);
}

TEST(Grids, Values) {
  const auto u = upr_grid();
  ASSERT_EQ(u.size(), 6u);
  EXPECT_DOUBLE_EQ(u[3], 0.6);
  const auto a = augment_grid();
  ASSERT_EQ(a.size(), 11u);
  EXPECT_DOUBLE_EQ(a.front(), std::pow(2.0, -5) / 100);
  EXPECT_DOUBLE_EQ(a.back(), 0.32);
}

TEST(Records, SidecarJson) {
  UprRecord rec;
  make_upr_corpus(cased_corpus(100), {0.1, 0.6, 3}, &rec);
  const auto j = rec.to_json();
  EXPECT_EQ(j.at("upper_source").get<std::size_t>(), 10u);
  EXPECT_EQ(j.at("upper_both").get<std::size_t>(), 6u);
  EXPECT_EQ(j.at("spec").at("seed").get<std::uint64_t>(), 3u);
}
