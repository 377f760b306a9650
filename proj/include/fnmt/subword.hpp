// Byte-pair encoding with an optional case-safe application mode.
#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fnmt/text.hpp"

namespace fnmt {

inline constexpr std::string_view kContinuationMarker = "@@";

struct ReservedSymbols {
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kCount = 4;
};

inline constexpr std::array<std::string_view, 4> kReservedNames = {"<pad>", "<s>", "</s>", "<unk>"};

/// Ordered merge table plus the subword vocabulary it induces on its
/// training data. Merges are learned on lowercased text.
class SubwordModel {
 public:
  using Merge = std::pair<std::string, std::string>;

  SubwordModel() = default;
  SubwordModel(std::vector<Merge> merges, std::map<std::string, int> vocab);

  [[nodiscard]] const std::vector<Merge>& merges() const { return merges_; }
  [[nodiscard]] const std::map<std::string, int>& vocab() const { return vocab_; }
  [[nodiscard]] std::size_t num_merges() const { return merges_.size(); }
  /// Rank of a merge or -1.
  [[nodiscard]] int rank(std::string_view left, std::string_view right) const;

  void save_merges(const std::filesystem::path& path) const;
  void save_vocab(const std::filesystem::path& path) const;
  static SubwordModel load(const std::filesystem::path& merges,
                           const std::filesystem::path& vocab = {});

 private:
  std::vector<Merge> merges_;
  std::map<std::string, int> vocab_;
  std::map<std::string, int, std::less<>> ranks_;
};

struct BpeTrainOptions {
  std::size_t num_merges = 500;
  std::size_t min_frequency = 2;
};

/// Learns merges over the summed source+target word frequencies.
SubwordModel bpe_train(const ParallelCorpus& corpus, const BpeTrainOptions& options);
SubwordModel bpe_train(const std::vector<Sentence>& sentences, const BpeTrainOptions& options);

/// Segments each token; non-final subwords carry "@@". With case_safe,
/// a merge is skipped when the merged cased span would be mixed-case.
Sentence bpe_apply(const Sentence& sentence, const SubwordModel& model, bool case_safe);
std::vector<Token> bpe_segment_word(std::string_view word, const SubwordModel& model,
                                    bool case_safe);

/// Joins continuation subwords back into words.
Sentence bpe_restore(const Sentence& sentence);

}  // namespace fnmt
