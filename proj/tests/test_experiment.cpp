#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "fnmt/experiment.hpp"
#include "fnmt/metrics.hpp"

using namespace fnmt;

TEST(Config, DefaultsRoundTripAndHash) {
  ExperimentConfig c;
  c.seed = 9;
  c.factors = FactorSetup::from_name("target");
  const auto back = ExperimentConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_EQ(back.hash(), c.hash());
  EXPECT_EQ(c.hash().size(), 16u);
  auto other = c;
  other.seed = 10;
  EXPECT_NE(other.hash(), c.hash());
}

TEST(Config, UnknownKeysRejected) {
  EXPECT_THROW(ExperimentConfig::from_json({{"bogus", 1}}), Error);
  EXPECT_THROW(ExperimentConfig::from_json({{"model", {{"layers", 3}}}}), Error);
  EXPECT_THROW(ExperimentConfig::from_json({{"train", {{"lr", 3}}}}), Error);
  EXPECT_THROW(ExperimentConfig::from_json({{"factors", {{"attribute", "tense"}}}}), Error);
  const auto c = ExperimentConfig::from_json({{"model", {{"embed_dim", 32}}}, {"train", {{"max_steps", 5}}}});
  EXPECT_EQ(c.model.embed_dim, 32);
  EXPECT_EQ(c.model.heads, 4);
  EXPECT_EQ(c.train.max_steps, 5);
}

TEST(Config, LoadFromFile) {
  const auto p = std::filesystem::temp_directory_path() / "fnmt_config.json";
  std::ofstream(p) << R"({"seed": 3, "subword": {"num_merges": 10}})";
  EXPECT_EQ(ExperimentConfig::load(p).subword.num_merges, 10u);
  std::ofstream(p) << "{not json";
  EXPECT_THROW(ExperimentConfig::load(p), Error);
  std::filesystem::remove(p);
}

TEST(FactorSetup, Names) {
  for (const char* n : {"none", "source", "target", "both"}) EXPECT_EQ(FactorSetup::from_name(n).name(), n);
  EXPECT_THROW(FactorSetup::from_name("all"), Error);
}

TEST(Pipeline, CaseFactoredSides) {
  ParallelCorpus c{"c", {{tokenize("Hello world"), tokenize("Hallo Welt")}, {tokenize("hello there"), tokenize("hallo da")}}};
  Pipeline p(FactorSetup::from_name("source"), SubwordSetup{true, 20, 1, true});
  p.fit(c);
  const auto src = p.prepare(tokenize("HELLO WiFi"), Side::Source);
  for (const auto& t : src) {
    ASSERT_EQ(t.factors.size(), 1u);
    EXPECT_EQ(lowercase({t.form})[0], t.form);
  }
  const auto tgt = p.prepare(tokenize("Hallo"), Side::Target);
  EXPECT_TRUE(tgt[0].factors.empty());
  EXPECT_EQ(bpe_restore(forms_of(tgt)), Sentence{"Hallo"});
  EXPECT_EQ(p.streams(Side::Source).size(), 1u);
  EXPECT_TRUE(p.streams(Side::Target).empty());
}

TEST(Pipeline, GenderBroadcastsOverSubwords) {
  ParallelCorpus c{"g", {{tokenize("the singer"), tokenize("la chanteuse")}, {tokenize("a singer"), tokenize("le chanteur")}}};
  const GenderLexicon lex({{"chanteuse", GenderFactor::Feminine}, {"chanteur", GenderFactor::Masculine}});
  Pipeline p(FactorSetup::from_name("target", "gender"), SubwordSetup{true, 3, 1, true});
  p.fit(c, &lex);
  const auto t = p.prepare(tokenize("la chanteuse"), Side::Target);
  ASSERT_GT(t.size(), 2u);
  std::size_t first_end = 0;
  while (t[first_end].form.ends_with("@@")) ++first_end;
  for (std::size_t i = 0; i < t.size(); ++i)
    EXPECT_EQ(t[i].factors[0], static_cast<int>(i <= first_end ? GenderFactor::Unknown : GenderFactor::Feminine));
  EXPECT_EQ(bpe_restore(forms_of(t)), tokenize("la chanteuse"));
}

TEST(Pipeline, SaveLoad) {
  ParallelCorpus c{"c", {{tokenize("Hello world"), tokenize("Hallo Welt")}}};
  Pipeline p(FactorSetup::from_name("both"), SubwordSetup{true, 5, 1, true});
  p.fit(c);
  const auto dir = std::filesystem::temp_directory_path() / "fnmt_pipeline";
  p.save(dir);
  const auto q = Pipeline::load(dir);
  EXPECT_EQ(q.bpe().merges(), p.bpe().merges());
  EXPECT_EQ(q.prepare(tokenize("HELLO Welt"), Side::Source), p.prepare(tokenize("HELLO Welt"), Side::Source));
  std::filesystem::remove_all(dir);
}

TEST(Pipeline, ModelConfigFollowsSetup) {
  Pipeline p(FactorSetup::from_name("target"), SubwordSetup{});
  Vocab v;
  v.add("x");
  const auto c = p.model_config(ModelSetup{}, v);
  EXPECT_FALSE(c.source_factors);
  EXPECT_TRUE(c.target_factors);
  ASSERT_EQ(c.factor_streams.size(), 1u);
  EXPECT_EQ(c.factor_streams[0].labels, 4);
}

TEST(Toy, CopyCorpus) {
  const auto c = toy::copy_corpus(100, 50, 3, 8, 1);
  EXPECT_EQ(c.size(), 100u);
  std::set<std::string> words;
  for (const auto& p : c.pairs) {
    EXPECT_EQ(p.source, p.target);
    EXPECT_GE(p.source.size(), 3u);
    EXPECT_LE(p.source.size(), 8u);
    words.insert(p.source.begin(), p.source.end());
  }
  EXPECT_LE(words.size(), 50u);
  EXPECT_EQ(toy::copy_corpus(100, 50, 3, 8, 1), c);
  EXPECT_THROW(toy::copy_corpus(1, 5, 3, 2, 1), Error);
}

TEST(Toy, GenderCorpusCounts) {
  const std::vector<toy::GenderGroup> groups{{1, 0}, {3, 1}, {1, 1}, {1, 3}, {0, 1}};
  const auto g = toy::gender_corpus(groups, 2, 8, 3, 4);
  EXPECT_EQ(g.train.size(), 5u * 2 * 8);
  EXPECT_EQ(g.pairs.size(), 5u * 2 * 3);
  ASSERT_EQ(g.group_training_ratio.size(), 5u);
  EXPECT_DOUBLE_EQ(g.group_training_ratio[1], 0.75);
  std::vector<Sentence> targets = side_of(g.train, Side::Target);
  for (std::size_t i = 0; i < g.pairs.size(); ++i) {
    const auto& p = g.pairs[i];
    EXPECT_NE(p.masculine, p.feminine);
    EXPECT_DOUBLE_EQ(training_masculine_ratio(p.count_masc, p.count_fem), g.group_training_ratio[g.pair_group[i]]);
    // Held-out contexts never occur verbatim in training.
    EXPECT_EQ(count_phrase(targets, tokenize(p.masculine)) + count_phrase(targets, tokenize(p.feminine)), 0u);
  }
}

TEST(Sweep, ValuesAndCsv) {
  EXPECT_EQ(sweep_values(SweepGrid::Upr).size(), 6u);
  EXPECT_EQ(sweep_values(SweepGrid::Augment).size(), 12u);
  const auto p = std::filesystem::temp_directory_path() / "fnmt_sweep.csv";
  write_sweep_csv(p, {{"none", 0.2, 12.5, 0.25, 0.5}, {"both", 0.4, 10.0, 0.0, std::nullopt}});
  std::ifstream in(p);
  std::string a, b, c;
  std::getline(in, a);
  std::getline(in, b);
  std::getline(in, c);
  EXPECT_EQ(a, "config,grid_value,bleu_ci,upper_ratio,centroid_cos");
  EXPECT_EQ(b, "none,0.2,12.5,0.25,0.5");
  EXPECT_EQ(c, "both,0.4,10,0,");
  std::filesystem::remove(p);
}

TEST(Sweep, TinyUprGridProducesOneRowPerPoint) {
  const auto base = toy::copy_corpus(80, 10, 2, 4, 1);
  const auto valid = toy::copy_corpus(10, 10, 2, 4, 2);
  const auto test = toy::copy_corpus(10, 10, 2, 4, 3);
  ExperimentConfig cfg;
  cfg.data.upper_source_fraction = 0.25;
  cfg.model = {8, 16, 2, 1, 1, 20, true};
  cfg.train.max_steps = 5;
  cfg.train.checkpoint_interval = 5;
  cfg.eval.max_len = 8;
  const auto rows = run_sweep(base, valid, test, cfg, SweepGrid::Upr);
  ASSERT_EQ(rows.size(), 24u);
  EXPECT_EQ(rows[0].config, "none");
  EXPECT_EQ(rows[23].config, "both");
  EXPECT_DOUBLE_EQ(rows[23].grid_value, 1.0);
}
