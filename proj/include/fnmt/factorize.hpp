// Token-level attribute factors: deduction, recombination and file I/O.
#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fnmt/error.hpp"
#include "fnmt/text.hpp"

namespace fnmt {

enum class CaseFactor { Uppercased, Capitalized, Lowercased, Undefined };
enum class GenderFactor { Masculine, Feminine, Unknown };

inline constexpr std::array<std::string_view, 4> kCaseLabels = {"uppercased", "capitalized",
                                                                 "lowercased", "undefined"};
inline constexpr std::array<std::string_view, 3> kGenderLabels = {"masculine", "feminine",
                                                                   "unknown"};

std::string_view to_string(CaseFactor f);
std::string_view to_string(GenderFactor f);
CaseFactor parse_case_factor(std::string_view s);
GenderFactor parse_gender_factor(std::string_view s);

/// Raised for tokens whose casing fits none of the four classes (e.g. "WiFi").
class MixedCaseError : public Error {
 public:
  explicit MixedCaseError(const std::string& token)
      : Error("mixed-case token '" + token + "' has no case factor"), token_(token) {}
  [[nodiscard]] const std::string& token() const { return token_; }

 private:
  std::string token_;
};

struct CaseDeduction {
  Token form;
  CaseFactor factor;
};

/// Splits a surface token into its lowercased form and case class. A single
/// uppercase cased character counts as Capitalized.
CaseDeduction deduce_case(std::string_view token);

/// Case class only; nullopt-free variant used by metrics. Throws MixedCaseError.
CaseFactor case_class(std::string_view token);

/// Inverse of deduce_case.
Token recombine_case(std::string_view form, CaseFactor factor);

/// A named factor stream with its label inventory.
struct FactorStream {
  std::string name;
  std::vector<std::string> labels;

  [[nodiscard]] int index_of(std::string_view label) const;
  friend bool operator==(const FactorStream&, const FactorStream&) = default;
};

FactorStream case_stream();
FactorStream gender_stream();

/// One position in a factored sequence: the f1 word form plus one label
/// index per configured stream.
struct FactoredToken {
  Token form;
  std::vector<int> factors;
  friend bool operator==(const FactoredToken&, const FactoredToken&) = default;
};

using FactoredSentence = std::vector<FactoredToken>;

/// Case-factors a (possibly BPE-segmented) sentence. A trailing "@@"
/// continuation marker is kept on the form and ignored for deduction.
FactoredSentence factor_case(const Sentence& sentence);

/// Recombines case-factored tokens to surface tokens (markers preserved).
Sentence recombine_case(const FactoredSentence& sentence, std::size_t stream = 0);

Sentence forms_of(const FactoredSentence& sentence);

class GenderLexicon {
 public:
  GenderLexicon() = default;
  explicit GenderLexicon(std::map<std::string, GenderFactor> entries);

  [[nodiscard]] GenderFactor lookup(std::string_view token) const;
  [[nodiscard]] const std::map<std::string, GenderFactor>& entries() const { return entries_; }

  static GenderLexicon load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

 private:
  std::map<std::string, GenderFactor> entries_;
};

/// Attaches a single gender stream; forms stay equal to the surface.
FactoredSentence annotate_gender(const Sentence& sentence, const GenderLexicon& lexicon);

/// Repeats the word-level factor once per subword.
std::vector<GenderFactor> broadcast_factors(GenderFactor word_factor,
                                            const std::vector<Token>& subwords);

std::string escape_form(std::string_view form);
std::string unescape_form(std::string_view escaped);

/// `form|LABEL1|LABEL2...` tokens joined by spaces.
std::string format_factored(const FactoredSentence& sentence,
                            const std::vector<FactorStream>& streams);
FactoredSentence parse_factored(std::string_view line, const std::vector<FactorStream>& streams);

std::vector<FactoredSentence> read_factored(const std::filesystem::path& path,
                                            const std::vector<FactorStream>& streams);
void write_factored(const std::filesystem::path& path,
                    const std::vector<FactoredSentence>& sentences,
                    const std::vector<FactorStream>& streams);

}  // namespace fnmt
