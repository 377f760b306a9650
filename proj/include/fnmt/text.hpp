// Tokenization, truecasing, case transforms and parallel-corpus I/O.
#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fnmt/error.hpp"

namespace fnmt {

/// A whitespace-free surface form.
using Token = std::string;
using Sentence = std::vector<Token>;

struct SentencePair {
  Sentence source;
  Sentence target;
  friend bool operator==(const SentencePair&, const SentencePair&) = default;
};

struct ParallelCorpus {
  std::string name;
  std::vector<SentencePair> pairs;

  [[nodiscard]] std::size_t size() const { return pairs.size(); }
  [[nodiscard]] bool empty() const { return pairs.empty(); }
  friend bool operator==(const ParallelCorpus&, const ParallelCorpus&) = default;
};

enum class Side { Source, Target };

/// Splits on Unicode whitespace and peels leading/trailing punctuation
/// (general category P) off each chunk as single-character tokens.
Sentence tokenize(std::string_view line);

/// Joins tokens with single spaces.
std::string detokenize(const Sentence& sentence);

Sentence lowercase(const Sentence& sentence);
Sentence uppercase(const Sentence& sentence);

/// Maps each lowercased form to its most frequent surface variant.
/// Ties go to the code-point-smallest variant.
class TruecaseModel {
 public:
  static constexpr std::string_view kTieBreak = "lexicographic-min";

  TruecaseModel() = default;
  explicit TruecaseModel(std::map<std::string, std::string> variants);

  [[nodiscard]] const std::string* find(std::string_view lowered) const;
  [[nodiscard]] const std::map<std::string, std::string>& variants() const { return variants_; }
  [[nodiscard]] std::size_t size() const { return variants_.size(); }

  void save(const std::filesystem::path& path) const;
  static TruecaseModel load(const std::filesystem::path& path);

 private:
  std::map<std::string, std::string> variants_;
};

TruecaseModel truecase_train(const ParallelCorpus& corpus, Side side);
TruecaseModel truecase_train(const std::vector<Sentence>& sentences);
Sentence truecase_apply(const Sentence& sentence, const TruecaseModel& model);

std::vector<Sentence> read_sentences(const std::filesystem::path& path);
void write_sentences(const std::filesystem::path& path, const std::vector<Sentence>& sentences);

/// Reads two line-aligned files. Pairs with an empty side are rejected.
ParallelCorpus read_parallel(const std::filesystem::path& source,
                             const std::filesystem::path& target, std::string name = {});
void write_parallel(const ParallelCorpus& corpus, const std::filesystem::path& source,
                    const std::filesystem::path& target);

std::vector<Sentence> side_of(const ParallelCorpus& corpus, Side side);

}  // namespace fnmt
