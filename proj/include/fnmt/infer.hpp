// Decoding with factor recombination, and forced-decoding scores for
// gendered translation pairs.
#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "fnmt/seq2seq.hpp"

namespace fnmt {

struct Hypothesis {
  std::vector<int> words;                 // emitted word ids, EOS excluded
  std::vector<std::vector<int>> factors;  // [stream][position], model label ids
  double log_prob = 0.0;                  // words (with EOS) plus factor streams
  double word_log_prob = 0.0;
  bool truncated = false;

  /// Factored target tokens (forms + 0-based labels).
  [[nodiscard]] FactoredSentence factored(const Vocab& vocab) const;
};

/// Surface sentence: case recombination (when a "case" stream exists) then
/// BPE restoration.
Sentence surface_of(const FactoredSentence& target, const ModelConfig& config);

FactoredExample source_example(const FactoredSentence& source, const Vocab& vocab,
                               const ModelConfig& config);

template <typename T>
Hypothesis greedy_translate(const FactoredSeq2Seq<T>& model, const Vocab& vocab,
                            const FactoredSentence& source, int max_len);

template <typename T>
Hypothesis beam_translate(const FactoredSeq2Seq<T>& model, const Vocab& vocab,
                          const FactoredSentence& source, int beam_size, int max_len);

struct ForcedScore {
  double log_prob = 0.0;       // selected streams, summed over all positions
  double word_log_prob = 0.0;
  std::vector<double> per_position;  // contribution of each target position
  bool has_unknown = false;
};

/// Unnormalized log-probability of a given target. With include_factors the
/// factor streams are added (the full joint); otherwise only the words.
template <typename T>
ForcedScore forced_score(const FactoredSeq2Seq<T>& model, const Vocab& vocab,
                         const FactoredSentence& source, const FactoredSentence& target,
                         bool include_factors = true);

struct ProfessionPair {
  std::string english;
  std::string masculine;
  std::string feminine;
  std::size_t count_masc = 0;
  std::size_t count_fem = 0;

  void validate() const;
};

std::vector<ProfessionPair> read_profession_pairs(const std::filesystem::path& path);

/// Occurrences of a tokenized phrase as a contiguous token run.
std::size_t count_phrase(const std::vector<Sentence>& sentences, const Sentence& phrase);

/// Fills counts from the target side and drops pairs below min_total.
std::vector<ProfessionPair> count_and_filter(std::vector<ProfessionPair> pairs,
                                             const std::vector<Sentence>& target_side,
                                             std::size_t min_total = 5);

struct PairChoice {
  GenderFactor choice = GenderFactor::Masculine;
  double masculine_score = 0.0;
  double feminine_score = 0.0;
  double margin = 0.0;  // masculine - feminine
  bool tie = false;
};

/// Turns a raw phrase into the model's factored input/output sequence.
using PhraseEncoder = std::function<FactoredSentence(const std::string& phrase, Side side)>;

template <typename T>
std::vector<PairChoice> score_pairs(const FactoredSeq2Seq<T>& model, const Vocab& vocab,
                                    const std::vector<ProfessionPair>& pairs,
                                    const PhraseEncoder& encode, bool include_factors = true);

void write_pair_scores(const std::filesystem::path& path, const std::vector<ProfessionPair>& pairs,
                       const std::vector<PairChoice>& choices);

}  // namespace fnmt
