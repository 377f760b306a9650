#include <gtest/gtest.h>

#include <filesystem>

#include "fnmt/factorize.hpp"
#include "fnmt/random.hpp"
#include "fnmt/subword.hpp"
#include "fnmt/vocab.hpp"

using namespace fnmt;

namespace {

SubwordModel wifi_model() {
  return SubwordModel({{"w", "i"}, {"f", "i"}, {"wi", "fi"}}, {});
}

SubwordModel prefix(const SubwordModel& m, std::size_t k) {
  return SubwordModel(std::vector<SubwordModel::Merge>(m.merges().begin(), m.merges().begin() + k), {});
}

std::vector<Sentence> random_text(std::uint64_t seed, std::size_t n) {
  const std::string pieces[] = {"a", "b", "c", "d", "e", "A", "B", "E", "é", "É", "-", "'"};
  Rng rng(seed);
  std::vector<Sentence> out;
  for (std::size_t i = 0; i < n; ++i) {
    Sentence s;
    const auto words = uniform_index(rng, 8);
    for (std::uint64_t w = 0; w < words; ++w) {
      std::string t;
      const auto len = 1 + uniform_index(rng, 7);
      for (std::uint64_t c = 0; c < len; ++c) t += pieces[uniform_index(rng, std::size(pieces))];
      s.push_back(t);
    }
    out.push_back(s);
  }
  return out;
}

}  // namespace

TEST(BpeTrain, MostFrequentPair) {
  auto m = bpe_train(std::vector<Sentence>{{"ab", "ab", "ab"}}, {1, 2});
  ASSERT_EQ(m.num_merges(), 1u);
  EXPECT_EQ(m.merges()[0], (SubwordModel::Merge{"a", "b"}));

  m = bpe_train(std::vector<Sentence>{{"aa", "bb", "aa"}}, {1, 1});
  ASSERT_EQ(m.num_merges(), 1u);
  EXPECT_EQ(m.merges()[0], (SubwordModel::Merge{"a", "a"}));
}

TEST(BpeTrain, TiesAreLexicographic) {
  const auto m = bpe_train(std::vector<Sentence>{{"ba", "ab"}, {"ba", "ab"}}, {1, 1});
  ASSERT_EQ(m.num_merges(), 1u);
  EXPECT_EQ(m.merges()[0], (SubwordModel::Merge{"a", "b"}));
}

TEST(BpeTrain, ZeroMergesIsCharacterLevel) {
  const auto m = bpe_train(std::vector<Sentence>{{"hello", "world"}}, {0, 2});
  EXPECT_EQ(m.num_merges(), 0u);
  for (const auto& [sym, id] : m.vocab()) {
    if (id < ReservedSymbols::kCount) continue;
    std::string body = sym;
    if (body.ends_with("@@")) body.resize(body.size() - 2);
    EXPECT_EQ(body.size(), 1u) << sym;
  }
}

TEST(BpeTrain, VocabHasReservedIdsAndIsDense) {
  const auto m = bpe_train(std::vector<Sentence>{{"hello", "hello", "help"}}, {5, 2});
  std::vector<bool> seen(m.vocab().size(), false);
  for (const auto& [sym, id] : m.vocab()) {
    ASSERT_LT(static_cast<std::size_t>(id), seen.size());
    seen[static_cast<std::size_t>(id)] = true;
  }
  for (bool b : seen) EXPECT_TRUE(b);
  for (int i = 0; i < ReservedSymbols::kCount; ++i) EXPECT_EQ(m.vocab().at(std::string(kReservedNames[i])), i);
}

TEST(BpeTrain, MinFrequencyStopsEarly) {
  const auto m = bpe_train(std::vector<Sentence>{{"xy"}}, {10, 2});
  EXPECT_EQ(m.num_merges(), 0u);
  EXPECT_THROW(bpe_train(std::vector<Sentence>{}, {10, 2}), Error);
}

TEST(BpeApply, CaseSafeWifi) {
  const auto m = wifi_model();
  EXPECT_EQ(bpe_apply({"WiFi"}, m, true), (Sentence{"Wi@@", "Fi"}));
  EXPECT_EQ(bpe_apply({"wifi"}, m, true), Sentence{"wifi"});
  EXPECT_EQ(bpe_apply({"WIFI"}, m, true), Sentence{"WIFI"});
  EXPECT_EQ(bpe_apply({"Wifi"}, m, true), Sentence{"Wifi"});
  EXPECT_EQ(bpe_apply({"WiFi"}, m, false), Sentence{"WiFi"});
}

TEST(BpeApply, UnknownCharactersBecomeSingleSymbols) {
  EXPECT_EQ(bpe_apply({"wiß"}, wifi_model(), true), (Sentence{"wi@@", "ß"}));
  EXPECT_EQ(bpe_apply({}, wifi_model(), true), Sentence{});
}

TEST(BpeRestore, Examples) {
  EXPECT_EQ(bpe_restore({"Wi@@", "Fi"}), Sentence{"WiFi"});
  EXPECT_EQ(bpe_restore({"hello"}), Sentence{"hello"});
  EXPECT_EQ(bpe_restore({"a@@", "b@@", "c"}), Sentence{"abc"});
  EXPECT_THROW(bpe_restore({"a@@"}), Error);
}

TEST(BpeProperties, RoundTripAndCaseSafety) {
  const auto text = random_text(11, 300);
  const auto m = bpe_train(text, {200, 2});
  for (const auto& s : random_text(12, 300)) {
    for (bool safe : {false, true}) {
      const auto seg = bpe_apply(s, m, safe);
      EXPECT_EQ(bpe_restore(seg), s);
      if (!safe) continue;
      for (const auto& piece : seg) {
        std::string body = piece;
        if (body.ends_with("@@")) body.resize(body.size() - 2);
        // Characters that are already mixed on their own are out of BPE's reach.
        bool single = false;
        try {
          deduce_case(piece);
        } catch (const MixedCaseError&) {
          single = true;
        }
        EXPECT_FALSE(single) << piece;
      }
    }
  }
}

TEST(BpeProperties, MoreMergesNeverIncreaseLength) {
  const auto text = random_text(21, 200);
  const auto full = bpe_train(text, {150, 2});
  const auto sample = random_text(22, 100);
  std::vector<std::size_t> previous(sample.size(), SIZE_MAX);
  for (std::size_t k = 0; k <= full.num_merges(); k += 5) {
    const auto m = prefix(full, k);
    for (std::size_t i = 0; i < sample.size(); ++i) {
      const auto n = bpe_apply(sample[i], m, false).size();
      EXPECT_LE(n, previous[i]);
      previous[i] = n;
    }
  }
}

TEST(SubwordModel, FilesRoundTrip) {
  const auto m = bpe_train(std::vector<Sentence>{{"hello", "hello", "help", "yellow"}}, {6, 2});
  const auto dir = std::filesystem::temp_directory_path();
  m.save_merges(dir / "fnmt.merges");
  m.save_vocab(dir / "fnmt.vocab");
  const auto back = SubwordModel::load(dir / "fnmt.merges", dir / "fnmt.vocab");
  EXPECT_EQ(back.merges(), m.merges());
  EXPECT_EQ(back.vocab(), m.vocab());
  EXPECT_EQ(back.rank(m.merges()[0].first, m.merges()[0].second), 0);
  EXPECT_EQ(back.rank("q", "z"), -1);
}

TEST(Vocab, BuildLookupAndIo) {
  const auto v = Vocab::build({{"b", "a", "b"}, {"c", "b", "a"}});
  EXPECT_EQ(v.size(), 7);
  EXPECT_EQ(v.symbol(4), "b");
  EXPECT_EQ(v.symbol(5), "a");
  EXPECT_EQ(v.id("zzz"), ReservedSymbols::kUnk);
  EXPECT_FALSE(v.contains("zzz"));
  const auto p = std::filesystem::temp_directory_path() / "fnmt_vocab.tsv";
  v.save(p);
  EXPECT_EQ(Vocab::load(p), v);
  std::filesystem::remove(p);
}
