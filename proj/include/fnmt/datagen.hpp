// Controlled training distributions: uppercasing-preservation sweeps and
// uppercase augmentation.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "fnmt/text.hpp"

namespace fnmt {

struct UprSpec {
  double upper_source_fraction = 0.02;
  double upr = 0.0;
  std::uint64_t seed = 1;

  void validate() const;
};

struct AugmentSpec {
  double fraction = 0.0;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Nearest integer, halves away from zero.
std::size_t round_count(double x);

struct UprRecord {
  UprSpec spec;
  std::size_t pairs = 0;
  std::size_t upper_source = 0;
  std::size_t upper_both = 0;
  std::vector<std::size_t> upper_source_indices;  // sorted
  std::vector<std::string> warnings;

  [[nodiscard]] nlohmann::json to_json() const;
};

struct AugmentRecord {
  AugmentSpec spec;
  std::size_t original = 0;
  std::size_t appended = 0;
  bool with_replacement = false;
  std::vector<std::size_t> sampled_indices;  // in append order

  [[nodiscard]] nlohmann::json to_json() const;
};

/// Lowercases everything, uppercases the source of ⌊f·N⌉ random pairs and
/// the target of ⌊upr·k⌉ of those.
ParallelCorpus make_upr_corpus(const ParallelCorpus& corpus, const UprSpec& spec,
                               UprRecord* record = nullptr);

/// Appends ⌊fraction·N⌉ sampled pairs uppercased on both sides.
ParallelCorpus augment_uppercase(const ParallelCorpus& corpus, const AugmentSpec& spec,
                                 AugmentRecord* record = nullptr);

/// The grids swept by the experiments: UPR 0..1 in steps of 0.2 and
/// augmentation sizes 2^-5 % .. 2^5 % of the corpus.
std::vector<double> upr_grid();
std::vector<double> augment_grid();

}  // namespace fnmt
