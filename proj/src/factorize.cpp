#include "fnmt/factorize.hpp"

#include <fstream>

#include "fnmt/unicode.hpp"

namespace fnmt {

namespace {

constexpr std::string_view kContinuation = "@@";

bool has_continuation(std::string_view t) {
  return t.size() > kContinuation.size() && t.substr(t.size() - kContinuation.size()) == kContinuation;
}

}  // namespace

std::string_view to_string(CaseFactor f) { return kCaseLabels[static_cast<std::size_t>(f)]; }
std::string_view to_string(GenderFactor f) { return kGenderLabels[static_cast<std::size_t>(f)]; }

CaseFactor parse_case_factor(std::string_view s) {
  for (std::size_t i = 0; i < kCaseLabels.size(); ++i)
    if (kCaseLabels[i] == s) return static_cast<CaseFactor>(i);
  throw Error("unknown case factor '" + std::string(s) + "'");
}

GenderFactor parse_gender_factor(std::string_view s) {
  for (std::size_t i = 0; i < kGenderLabels.size(); ++i)
    if (kGenderLabels[i] == s) return static_cast<GenderFactor>(i);
  throw Error("unknown gender factor '" + std::string(s) + "'");
}

CaseFactor case_class(std::string_view token) {
  const std::u32string cps = unicode::decode(token);
  std::size_t cased = 0, upper = 0, lower = 0;
  bool first_upper = false;
  for (char32_t c : cps) {
    if (!unicode::is_cased(c)) continue;
    const bool u = unicode::is_upper(c);
    const bool l = unicode::is_lower(c);
    if (cased == 0) first_upper = u;
    ++cased;
    upper += u;
    lower += l;
  }
  if (cased == 0) return CaseFactor::Undefined;
  if (lower == cased) return CaseFactor::Lowercased;
  if (cased == 1 && upper == 1) return CaseFactor::Capitalized;
  if (upper == cased) return CaseFactor::Uppercased;
  if (first_upper && lower == cased - 1) return CaseFactor::Capitalized;
  throw MixedCaseError(std::string(token));
}

CaseDeduction deduce_case(std::string_view token) {
  return {unicode::to_lower(token), case_class(token)};
}

Token recombine_case(std::string_view form, CaseFactor factor) {
  switch (factor) {
    case CaseFactor::Uppercased:
      return unicode::to_upper(form);
    case CaseFactor::Capitalized: {
      std::u32string cps = unicode::decode(form);
      for (auto& c : cps) {
        if (unicode::is_cased(c)) {
          c = unicode::to_upper_simple(c);
          break;
        }
      }
      return unicode::encode(cps);
    }
    case CaseFactor::Lowercased:
    case CaseFactor::Undefined:
      break;
  }
  return Token(form);
}

int FactorStream::index_of(std::string_view label) const {
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == label) return static_cast<int>(i);
  throw Error("label '" + std::string(label) + "' not in factor stream '" + name + "'");
}

FactorStream case_stream() { return {"case", {kCaseLabels.begin(), kCaseLabels.end()}}; }
FactorStream gender_stream() { return {"gender", {kGenderLabels.begin(), kGenderLabels.end()}}; }

FactoredSentence factor_case(const Sentence& sentence) {
  FactoredSentence out;
  out.reserve(sentence.size());
  for (const auto& t : sentence) {
    const bool cont = has_continuation(t);
    std::string_view body(t);
    if (cont) body.remove_suffix(kContinuation.size());
    auto [form, factor] = deduce_case(body);
    if (cont) form += kContinuation;
    out.push_back({std::move(form), {static_cast<int>(factor)}});
  }
  return out;
}

Sentence recombine_case(const FactoredSentence& sentence, std::size_t stream) {
  Sentence out;
  out.reserve(sentence.size());
  for (const auto& t : sentence) {
    const bool cont = has_continuation(t.form);
    std::string_view body(t.form);
    if (cont) body.remove_suffix(kContinuation.size());
    Token surface = recombine_case(body, static_cast<CaseFactor>(t.factors.at(stream)));
    if (cont) surface += kContinuation;
    out.push_back(std::move(surface));
  }
  return out;
}

Sentence forms_of(const FactoredSentence& sentence) {
  Sentence out;
  out.reserve(sentence.size());
  for (const auto& t : sentence) out.push_back(t.form);
  return out;
}

GenderLexicon::GenderLexicon(std::map<std::string, GenderFactor> entries)
    : entries_(std::move(entries)) {
  for (const auto& [form, g] : entries_)
    if (g == GenderFactor::Unknown)
      throw Error("gender lexicon entry '" + form + "' must be masculine or feminine");
}

GenderFactor GenderLexicon::lookup(std::string_view token) const {
  auto it = entries_.find(unicode::to_lower(token));
  return it == entries_.end() ? GenderFactor::Unknown : it->second;
}

GenderLexicon GenderLexicon::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::map<std::string, GenderFactor> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw Error(path.string() + ":" + std::to_string(lineno) + ": expected form<TAB>gender");
    entries[unicode::to_lower(line.substr(0, tab))] = parse_gender_factor(line.substr(tab + 1));
  }
  return GenderLexicon(std::move(entries));
}

void GenderLexicon::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& [form, g] : entries_) out << form << '\t' << to_string(g) << '\n';
}

FactoredSentence annotate_gender(const Sentence& sentence, const GenderLexicon& lexicon) {
  FactoredSentence out;
  out.reserve(sentence.size());
  for (const auto& t : sentence) out.push_back({t, {static_cast<int>(lexicon.lookup(t))}});
  return out;
}

std::vector<GenderFactor> broadcast_factors(GenderFactor word_factor,
                                            const std::vector<Token>& subwords) {
  if (subwords.empty()) throw Error("cannot broadcast a factor onto zero subwords");
  return std::vector<GenderFactor>(subwords.size(), word_factor);
}

std::string escape_form(std::string_view form) {
  std::string out;
  out.reserve(form.size());
  for (char c : form) {
    if (c == '|' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}

std::string unescape_form(std::string_view escaped) {
  std::string out;
  out.reserve(escaped.size());
  for (std::size_t i = 0; i < escaped.size(); ++i) {
    if (escaped[i] == '\\' && i + 1 < escaped.size()) ++i;
    out += escaped[i];
  }
  return out;
}

std::string format_factored(const FactoredSentence& sentence,
                            const std::vector<FactorStream>& streams) {
  std::string out;
  for (std::size_t i = 0; i < sentence.size(); ++i) {
    const auto& t = sentence[i];
    if (t.factors.size() != streams.size())
      throw Error("token '" + t.form + "' carries " + std::to_string(t.factors.size()) +
                  " factors, expected " + std::to_string(streams.size()));
    if (i) out += ' ';
    out += escape_form(t.form);
    for (std::size_t s = 0; s < streams.size(); ++s) {
      out += '|';
      out += streams[s].labels.at(static_cast<std::size_t>(t.factors[s]));
    }
  }
  return out;
}

FactoredSentence parse_factored(std::string_view line, const std::vector<FactorStream>& streams) {
  FactoredSentence out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    if (i >= line.size()) break;
    std::vector<std::string> fields(1);
    bool escaped = false;
    for (; i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r'; ++i) {
      const char c = line[i];
      if (escaped) {
        fields.back() += c;
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '|') {
        fields.emplace_back();
      } else {
        fields.back() += c;
      }
    }
    if (fields.size() != streams.size() + 1)
      throw Error("factored token '" + fields.front() + "' has " +
                  std::to_string(fields.size() - 1) + " factors, expected " +
                  std::to_string(streams.size()));
    FactoredToken tok{std::move(fields[0]), {}};
    for (std::size_t s = 0; s < streams.size(); ++s)
      tok.factors.push_back(streams[s].index_of(fields[s + 1]));
    out.push_back(std::move(tok));
  }
  return out;
}

std::vector<FactoredSentence> read_factored(const std::filesystem::path& path,
                                            const std::vector<FactorStream>& streams) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::vector<FactoredSentence> out;
  std::string line;
  while (std::getline(in, line)) out.push_back(parse_factored(line, streams));
  return out;
}

void write_factored(const std::filesystem::path& path,
                    const std::vector<FactoredSentence>& sentences,
                    const std::vector<FactorStream>& streams) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& s : sentences) out << format_factored(s, streams) << '\n';
}

}  // namespace fnmt
