#include "fnmt/subword.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_map>

#include "fnmt/factorize.hpp"
#include "fnmt/unicode.hpp"

namespace fnmt {

namespace {

std::string merge_key(std::string_view l, std::string_view r) {
  std::string k;
  k.reserve(l.size() + r.size() + 1);
  k.append(l);
  k += ' ';
  k.append(r);
  return k;
}

bool ends_with_marker(std::string_view t) {
  return t.size() > kContinuationMarker.size() &&
         t.substr(t.size() - kContinuationMarker.size()) == kContinuationMarker;
}

bool is_mixed(std::string_view s) {
  try {
    (void)case_class(s);
    return false;
  } catch (const MixedCaseError&) {
    return true;
  }
}

}  // namespace

SubwordModel::SubwordModel(std::vector<Merge> merges, std::map<std::string, int> vocab)
    : merges_(std::move(merges)), vocab_(std::move(vocab)) {
  for (std::size_t i = 0; i < merges_.size(); ++i)
    ranks_.emplace(merge_key(merges_[i].first, merges_[i].second), static_cast<int>(i));
}

int SubwordModel::rank(std::string_view left, std::string_view right) const {
  auto it = ranks_.find(merge_key(left, right));
  return it == ranks_.end() ? -1 : it->second;
}

void SubwordModel::save_merges(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& [l, r] : merges_) out << l << ' ' << r << '\n';
}

void SubwordModel::save_vocab(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  std::vector<std::pair<int, std::string>> by_id;
  for (const auto& [s, id] : vocab_) by_id.emplace_back(id, s);
  std::sort(by_id.begin(), by_id.end());
  for (const auto& [id, s] : by_id) out << s << '\t' << id << '\n';
}

SubwordModel SubwordModel::load(const std::filesystem::path& merges_path,
                                const std::filesystem::path& vocab_path) {
  std::ifstream in(merges_path, std::ios::binary);
  if (!in) throw Error("cannot read " + merges_path.string());
  std::vector<Merge> merges;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto sp = line.find(' ');
    if (sp == std::string::npos) throw Error("malformed merge line '" + line + "'");
    merges.emplace_back(line.substr(0, sp), line.substr(sp + 1));
  }
  std::map<std::string, int> vocab;
  if (!vocab_path.empty()) {
    std::ifstream vin(vocab_path, std::ios::binary);
    if (!vin) throw Error("cannot read " + vocab_path.string());
    while (std::getline(vin, line)) {
      if (line.empty()) continue;
      auto tab = line.rfind('\t');
      if (tab == std::string::npos) throw Error("malformed vocab line '" + line + "'");
      vocab.emplace(line.substr(0, tab), std::stoi(line.substr(tab + 1)));
    }
  }
  return SubwordModel(std::move(merges), std::move(vocab));
}

SubwordModel bpe_train(const std::vector<Sentence>& sentences, const BpeTrainOptions& options) {
  std::map<std::string, std::size_t> word_freq;
  for (const auto& s : sentences)
    for (const auto& t : s) ++word_freq[unicode::encode(unicode::to_lower_simple(unicode::decode(t)))];
  if (word_freq.empty()) throw Error("empty corpus");

  struct Word {
    std::vector<std::string> symbols;
    std::size_t freq;
  };
  std::vector<Word> words;
  words.reserve(word_freq.size());
  for (const auto& [w, f] : word_freq) {
    Word word{{}, f};
    for (char32_t c : unicode::decode(w)) word.symbols.push_back(unicode::encode(c));
    words.push_back(std::move(word));
  }

  std::vector<SubwordModel::Merge> merges;
  while (merges.size() < options.num_merges) {
    std::map<std::pair<std::string, std::string>, std::size_t> counts;
    for (const auto& w : words)
      for (std::size_t i = 0; i + 1 < w.symbols.size(); ++i)
        counts[{w.symbols[i], w.symbols[i + 1]}] += w.freq;
    // Map order is lexicographic, so the first maximum wins ties.
    const std::pair<std::string, std::string>* best = nullptr;
    std::size_t best_count = 0;
    for (const auto& [pair, n] : counts) {
      if (n > best_count) {
        best_count = n;
        best = &pair;
      }
    }
    if (!best || best_count < std::max<std::size_t>(1, options.min_frequency)) break;
    const auto merge = *best;
    const std::string joined = merge.first + merge.second;
    for (auto& w : words) {
      std::vector<std::string> next;
      next.reserve(w.symbols.size());
      for (std::size_t i = 0; i < w.symbols.size(); ++i) {
        if (i + 1 < w.symbols.size() && w.symbols[i] == merge.first &&
            w.symbols[i + 1] == merge.second) {
          next.push_back(joined);
          ++i;
        } else {
          next.push_back(w.symbols[i]);
        }
      }
      w.symbols = std::move(next);
    }
    merges.push_back(merge);
  }

  std::map<std::string, std::size_t> sym_freq;
  for (const auto& w : words)
    for (std::size_t i = 0; i < w.symbols.size(); ++i)
      sym_freq[i + 1 < w.symbols.size() ? w.symbols[i] + std::string(kContinuationMarker)
                                        : w.symbols[i]] += w.freq;
  std::vector<std::pair<std::string, std::size_t>> ordered(sym_freq.begin(), sym_freq.end());
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::map<std::string, int> vocab;
  for (int i = 0; i < ReservedSymbols::kCount; ++i) vocab.emplace(kReservedNames[i], i);
  for (const auto& [sym, f] : ordered) vocab.emplace(sym, static_cast<int>(vocab.size()));
  return SubwordModel(std::move(merges), std::move(vocab));
}

SubwordModel bpe_train(const ParallelCorpus& corpus, const BpeTrainOptions& options) {
  if (corpus.empty()) throw Error("empty corpus");
  std::vector<Sentence> all = side_of(corpus, Side::Source);
  auto tgt = side_of(corpus, Side::Target);
  all.insert(all.end(), std::make_move_iterator(tgt.begin()), std::make_move_iterator(tgt.end()));
  return bpe_train(all, options);
}

std::vector<Token> bpe_segment_word(std::string_view word, const SubwordModel& model,
                                    bool case_safe) {
  const std::u32string surface = unicode::decode(word);
  const std::u32string lowered = unicode::to_lower_simple(surface);
  // [begin, end) code point spans over the word
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  for (std::size_t i = 0; i < surface.size(); ++i) spans.emplace_back(i, i + 1);
  auto lower_of = [&](const std::pair<std::size_t, std::size_t>& s) {
    return unicode::encode(std::u32string_view(lowered).substr(s.first, s.second - s.first));
  };
  auto surface_of = [&](std::size_t b, std::size_t e) {
    return unicode::encode(std::u32string_view(surface).substr(b, e - b));
  };

  std::vector<std::string> keys;
  keys.reserve(spans.size());
  for (const auto& s : spans) keys.push_back(lower_of(s));

  while (spans.size() > 1) {
    int best_rank = std::numeric_limits<int>::max();
    std::size_t best_at = spans.size();
    for (std::size_t i = 0; i + 1 < spans.size(); ++i) {
      const int r = model.rank(keys[i], keys[i + 1]);
      if (r < 0 || r >= best_rank) continue;
      if (case_safe && is_mixed(surface_of(spans[i].first, spans[i + 1].second))) continue;
      best_rank = r;
      best_at = i;
    }
    if (best_at == spans.size()) break;
    spans[best_at].second = spans[best_at + 1].second;
    keys[best_at] += keys[best_at + 1];
    spans.erase(spans.begin() + static_cast<std::ptrdiff_t>(best_at) + 1);
    keys.erase(keys.begin() + static_cast<std::ptrdiff_t>(best_at) + 1);
  }

  std::vector<Token> out;
  out.reserve(spans.size());
  for (std::size_t i = 0; i < spans.size(); ++i) {
    Token t = surface_of(spans[i].first, spans[i].second);
    if (i + 1 < spans.size()) t += kContinuationMarker;
    out.push_back(std::move(t));
  }
  return out;
}

Sentence bpe_apply(const Sentence& sentence, const SubwordModel& model, bool case_safe) {
  Sentence out;
  out.reserve(sentence.size());
  for (const auto& word : sentence) {
    auto pieces = bpe_segment_word(word, model, case_safe);
    out.insert(out.end(), std::make_move_iterator(pieces.begin()),
               std::make_move_iterator(pieces.end()));
  }
  return out;
}

Sentence bpe_restore(const Sentence& sentence) {
  Sentence out;
  std::string pending;
  bool open = false;
  for (const auto& t : sentence) {
    if (ends_with_marker(t)) {
      pending.append(t, 0, t.size() - kContinuationMarker.size());
      open = true;
    } else {
      pending += t;
      out.push_back(std::move(pending));
      pending.clear();
      open = false;
    }
  }
  if (open) throw Error("dangling continuation marker at sentence end");
  return out;
}

}  // namespace fnmt
