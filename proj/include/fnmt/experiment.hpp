// Experiment configuration, the preprocessing pipeline that turns raw
// corpora into factored id sequences, toy corpora, and the sweep driver.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fnmt/datagen.hpp"
#include "fnmt/factorize.hpp"
#include "fnmt/infer.hpp"
#include "fnmt/seq2seq.hpp"
#include "fnmt/subword.hpp"
#include "fnmt/text.hpp"
#include "fnmt/train.hpp"

namespace fnmt {

struct FactorSetup {
  std::string attribute = "case";  // "case" or "gender"
  bool source = false;
  bool target = false;

  [[nodiscard]] std::string name() const;  // none | source | target | both
  static FactorSetup from_name(const std::string& name, std::string attribute = "case");
};

struct SubwordSetup {
  bool enabled = true;
  std::size_t num_merges = 500;
  std::size_t min_frequency = 2;
  bool case_safe = true;
};

struct DataSetup {
  std::string train_source, train_target;
  std::string valid_source, valid_target;
  std::string test_source, test_target;
  std::string lexicon;
  std::string pairs;
  double upper_source_fraction = 0.02;
  double upr = 0.0;
  double augment_fraction = 0.0;
  bool uppercase_test_source = true;
};

struct ModelSetup {
  int embed_dim = 64;
  int ff_dim = 128;
  int heads = 4;
  int enc_layers = 2;
  int dec_layers = 2;
  int max_len = 100;
  bool tie_embeddings = true;
};

struct EvalSetup {
  int beam_size = 1;
  int max_len = 100;
  bool include_factors = true;
  std::size_t min_pair_count = 5;
  std::size_t bins = 15;
};

struct ExperimentConfig {
  DataSetup data;
  FactorSetup factors;
  SubwordSetup subword;
  ModelSetup model;
  TrainOptions train;
  EvalSetup eval;
  std::uint64_t seed = 1;

  [[nodiscard]] nlohmann::json to_json() const;
  /// Unknown sections or keys are rejected; absent keys keep defaults.
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& path);
  /// FNV-1a 64 over the canonical JSON dump, as 16 hex digits.
  [[nodiscard]] std::string hash() const;
};

/// Raw tokens to the model's factored sequences for one factor setup.
class Pipeline {
 public:
  Pipeline() = default;
  Pipeline(FactorSetup factors, SubwordSetup subword);

  /// Truecases the training text, learns BPE on it and (for gender) keeps
  /// the lexicon.
  void fit(const ParallelCorpus& train, const GenderLexicon* lexicon = nullptr);

  [[nodiscard]] FactoredSentence prepare(const Sentence& tokens, Side side) const;
  [[nodiscard]] std::vector<FactoredPair> prepare(const ParallelCorpus& corpus) const;
  [[nodiscard]] std::vector<FactorStream> streams(Side side) const;

  [[nodiscard]] ModelConfig model_config(const ModelSetup& setup, const Vocab& vocab) const;

  [[nodiscard]] const FactorSetup& factors() const { return factors_; }
  [[nodiscard]] const SubwordSetup& subword() const { return subword_; }
  [[nodiscard]] const SubwordModel& bpe() const { return bpe_; }
  [[nodiscard]] const TruecaseModel& truecaser() const { return truecaser_; }

  void save(const std::filesystem::path& dir) const;
  static Pipeline load(const std::filesystem::path& dir);

 private:
  FactorSetup factors_;
  SubwordSetup subword_;
  TruecaseModel truecaser_;
  SubwordModel bpe_;
  GenderLexicon lexicon_;
};

/// Shared vocabulary over the forms of both sides.
Vocab build_vocab(const std::vector<FactoredPair>& pairs);

/// Cosine between the centroids of lowercased-token and uppercased-token
/// embeddings. Factored targets compose word + case-factor embeddings.
template <typename T>
std::optional<double> case_centroid_similarity(FactoredSeq2Seq<T>& model, const Vocab& vocab);

/// Everything needed to decode with a model trained from raw text.
struct TrainedSystem {
  Pipeline pipeline;
  Vocab vocab;
  FactoredSeq2Seq<float> model;
  TrainResult training;
};

/// Fits the pipeline on `train`, builds the vocabulary and trains a float
/// model seeded with config.seed.
TrainedSystem train_system(const ParallelCorpus& train, const ParallelCorpus& valid,
                           const ExperimentConfig& config, const GenderLexicon* lexicon = nullptr);

struct CaseRunResult {
  double bleu_ci = 0.0;
  double upper_ratio = 0.0;             // uppercased output tokens / all output tokens
  double upper_sentence_ratio = 0.0;    // all-uppercased output sentences / outputs
  std::optional<double> centroid_cos;
  TrainResult training;
  std::vector<Sentence> outputs;
};

/// Trains one model on `train` and evaluates on `test` (sources used as
/// given). Everything runs in float.
CaseRunResult run_case_experiment(const ParallelCorpus& train, const ParallelCorpus& valid,
                                  const ParallelCorpus& test, const ExperimentConfig& config);

struct SweepRow {
  std::string config;
  double grid_value = 0.0;
  double bleu_ci = 0.0;
  double upper_ratio = 0.0;
  std::optional<double> centroid_cos;
};

enum class SweepGrid { Upr, Augment };

/// Grid values: UPR {0,.2,...,1} or augmentation {0} plus 2^-5 % .. 2^5 %.
std::vector<double> sweep_values(SweepGrid grid);

/// All four factor setups times every grid value.
std::vector<SweepRow> run_sweep(const ParallelCorpus& base, const ParallelCorpus& valid,
                                const ParallelCorpus& test, const ExperimentConfig& config,
                                SweepGrid grid, const std::vector<std::string>& setups = {"none", "source", "target", "both"},
                                std::vector<double> values = {});

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows);

namespace toy {

/// `count` distinct lowercase pseudo-words.
std::vector<std::string> lexicon_words(std::size_t count, std::uint64_t seed);

/// Copy-translation corpus: target = source, lengths uniform in [min_len, max_len].
ParallelCorpus copy_corpus(std::size_t pairs, std::size_t vocab_size, std::size_t min_len,
                           std::size_t max_len, std::uint64_t seed);

struct GenderGroup {
  std::size_t masculine_weight = 1;
  std::size_t feminine_weight = 0;
};

struct GenderToy {
  ParallelCorpus train;
  GenderLexicon lexicon;
  std::vector<ProfessionPair> pairs;  // held-out contexts
  std::vector<std::size_t> pair_group;
  std::vector<double> group_training_ratio;
};

/// Word-by-word translation corpus where each profession word is rendered
/// masculine or feminine in controlled proportions per group.
GenderToy gender_corpus(const std::vector<GenderGroup>& groups, std::size_t professions_per_group,
                        std::size_t sentences_per_profession, std::size_t test_contexts,
                        std::uint64_t seed);

/// Trains a gender-factored model on the toy corpus and scores every
/// held-out pair; fractions are masculine choices per group.
struct GenderRunResult {
  std::vector<PairChoice> choices;
  std::vector<double> group_masculine_fraction;
  TrainResult training;
};

GenderRunResult run_gender_experiment(const GenderToy& data, const ExperimentConfig& config);

}  // namespace toy

}  // namespace fnmt
