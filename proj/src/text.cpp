#include "fnmt/text.hpp"

#include <fstream>
#include <sstream>
#include <unordered_map>

#include "fnmt/unicode.hpp"

namespace fnmt {

Sentence tokenize(std::string_view line) {
  Sentence out;
  const std::u32string cps = unicode::decode(line);
  std::size_t i = 0;
  while (i < cps.size()) {
    while (i < cps.size() && unicode::is_space(cps[i])) ++i;
    std::size_t j = i;
    while (j < cps.size() && !unicode::is_space(cps[j])) ++j;
    if (j == i) break;
    std::size_t begin = i;
    std::size_t end = j;
    while (begin < end && unicode::is_punct(cps[begin])) {
      out.push_back(unicode::encode(cps[begin]));
      ++begin;
    }
    std::size_t tail = end;
    while (tail > begin && unicode::is_punct(cps[tail - 1])) --tail;
    if (tail > begin) out.push_back(unicode::encode(std::u32string_view(cps).substr(begin, tail - begin)));
    for (std::size_t k = tail; k < end; ++k) out.push_back(unicode::encode(cps[k]));
    i = j;
  }
  return out;
}

std::string detokenize(const Sentence& sentence) {
  std::string out;
  for (std::size_t i = 0; i < sentence.size(); ++i) {
    if (i) out += ' ';
    out += sentence[i];
  }
  return out;
}

Sentence lowercase(const Sentence& sentence) {
  Sentence out;
  out.reserve(sentence.size());
  for (const auto& t : sentence) out.push_back(unicode::to_lower(t));
  return out;
}

Sentence uppercase(const Sentence& sentence) {
  Sentence out;
  out.reserve(sentence.size());
  for (const auto& t : sentence) out.push_back(unicode::to_upper(t));
  return out;
}

TruecaseModel::TruecaseModel(std::map<std::string, std::string> variants)
    : variants_(std::move(variants)) {
  for (const auto& [key, variant] : variants_) {
    if (unicode::to_lower(variant) != key)
      throw Error("truecase variant '" + variant + "' does not lowercase to '" + key + "'");
  }
}

const std::string* TruecaseModel::find(std::string_view lowered) const {
  auto it = variants_.find(std::string(lowered));
  return it == variants_.end() ? nullptr : &it->second;
}

void TruecaseModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& [key, variant] : variants_) out << key << '\t' << variant << '\n';
}

TruecaseModel TruecaseModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::map<std::string, std::string> variants;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw Error(path.string() + ":" + std::to_string(lineno) + ": expected lowercased<TAB>variant");
    variants.emplace(line.substr(0, tab), line.substr(tab + 1));
  }
  return TruecaseModel(std::move(variants));
}

TruecaseModel truecase_train(const std::vector<Sentence>& sentences) {
  std::unordered_map<std::string, std::map<std::string, std::size_t>> counts;
  std::size_t tokens = 0;
  for (const auto& s : sentences) {
    for (const auto& t : s) {
      ++counts[unicode::to_lower(t)][t];
      ++tokens;
    }
  }
  if (tokens == 0) throw Error("empty corpus");
  std::map<std::string, std::string> best;
  for (const auto& [key, variants] : counts) {
    // std::map iterates in byte order, which for UTF-8 is code-point order,
    // so a strict '>' keeps the smallest variant among equals.
    const std::string* winner = nullptr;
    std::size_t top = 0;
    for (const auto& [variant, n] : variants) {
      if (n > top) {
        top = n;
        winner = &variant;
      }
    }
    best.emplace(key, *winner);
  }
  return TruecaseModel(std::move(best));
}

TruecaseModel truecase_train(const ParallelCorpus& corpus, Side side) {
  if (corpus.empty()) throw Error("empty corpus");
  return truecase_train(side_of(corpus, side));
}

Sentence truecase_apply(const Sentence& sentence, const TruecaseModel& model) {
  Sentence out;
  out.reserve(sentence.size());
  for (const auto& t : sentence) {
    const std::string* v = model.find(unicode::to_lower(t));
    out.push_back(v ? *v : t);
  }
  return out;
}

std::vector<Sentence> read_sentences(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::vector<Sentence> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    Sentence s;
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) s.push_back(tok);
    out.push_back(std::move(s));
  }
  return out;
}

void write_sentences(const std::filesystem::path& path, const std::vector<Sentence>& sentences) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& s : sentences) out << detokenize(s) << '\n';
}

ParallelCorpus read_parallel(const std::filesystem::path& source,
                             const std::filesystem::path& target, std::string name) {
  auto src = read_sentences(source);
  auto tgt = read_sentences(target);
  if (src.size() != tgt.size())
    throw Error("parallel files differ in line count: " + std::to_string(src.size()) + " vs " +
                std::to_string(tgt.size()));
  ParallelCorpus corpus;
  corpus.name = name.empty() ? source.stem().string() : std::move(name);
  corpus.pairs.reserve(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i].empty() || tgt[i].empty())
      throw Error("empty sentence at line " + std::to_string(i + 1));
    corpus.pairs.push_back({std::move(src[i]), std::move(tgt[i])});
  }
  return corpus;
}

void write_parallel(const ParallelCorpus& corpus, const std::filesystem::path& source,
                    const std::filesystem::path& target) {
  write_sentences(source, side_of(corpus, Side::Source));
  write_sentences(target, side_of(corpus, Side::Target));
}

std::vector<Sentence> side_of(const ParallelCorpus& corpus, Side side) {
  std::vector<Sentence> out;
  out.reserve(corpus.size());
  for (const auto& p : corpus.pairs) out.push_back(side == Side::Source ? p.source : p.target);
  return out;
}

}  // namespace fnmt
