// Evaluation quantities: corpus BLEU, casing ratios, UPR and the
// masculine-ratio bin analysis.
#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fnmt/text.hpp"

namespace fnmt {

struct BleuScore {
  double score = 0.0;
  std::array<double, 4> precisions{};
  std::array<std::size_t, 4> matches{};
  std::array<std::size_t, 4> totals{};
  double brevity_penalty = 1.0;
  std::size_t hyp_length = 0;
  std::size_t ref_length = 0;
  int effective_order = 4;

  [[nodiscard]] nlohmann::json to_json() const;
};

inline constexpr const char* kBleuSmoothing =
    "floor: zero-match order uses 1/(2*hyp_ngrams); orders with no hypothesis n-grams are skipped";

/// Corpus BLEU-4 against a single reference per hypothesis.
BleuScore bleu(const std::vector<Sentence>& hypotheses, const std::vector<Sentence>& references,
               bool case_insensitive);

/// True iff the sentence has a cased character and all cased characters
/// are uppercase.
bool is_all_uppercased(const Sentence& sentence);

double uppercased_token_ratio(const std::vector<Sentence>& sentences);
double capitalized_token_ratio(const std::vector<Sentence>& sentences);
/// Fraction of sentences that are all-uppercased.
double uppercased_sentence_ratio(const std::vector<Sentence>& sentences);

struct UprCounts {
  std::size_t upper_source = 0;
  std::size_t upper_both = 0;
};
UprCounts upr_counts(const ParallelCorpus& corpus);
/// Absent when no source sentence is all-uppercased.
std::optional<double> upr(const ParallelCorpus& corpus);

double training_masculine_ratio(std::size_t count_masculine, std::size_t count_feminine);

struct BinInput {
  double training_ratio = 0.0;
  bool masculine_choice = false;
};

struct Bin {
  double mean_training_ratio = 0.0;
  double predicted_ratio = 0.0;
  std::size_t count = 0;
};

struct BinReport {
  std::vector<Bin> bins;
  double mse = 0.0;           // over bins
  double per_pair_mse = 0.0;  // over individual pairs

  [[nodiscard]] nlohmann::json to_json() const;
};

/// Sorts by training ratio and splits into n_bins contiguous groups whose
/// sizes differ by at most one, earlier bins taking the extra pairs.
BinReport bin_analysis(std::vector<BinInput> pairs, std::size_t n_bins = 15);

/// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

/// `{"metric": name, "value": x, "details": {...}}`
nlohmann::json metric_line(const std::string& name, double value, nlohmann::json details = nlohmann::json::object());
void append_report(const std::filesystem::path& path, const nlohmann::json& line);

}  // namespace fnmt
