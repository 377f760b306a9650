#include "fnmt/infer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

#include "fnmt/metrics.hpp"
#include "fnmt/subword.hpp"

namespace fnmt {

namespace {

/// Argmax over real labels (SHIFT excluded).
template <typename Row>
int argmax_label(const Row& logits) {
  Eigen::Index best = 1;
  for (Eigen::Index i = 2; i < logits.size(); ++i)
    if (logits(i) > logits(best)) best = i;
  return static_cast<int>(best);
}

template <typename Row>
int argmax_word(const Row& logits) {
  Eigen::Index best = 0;
  logits.maxCoeff(&best);
  return static_cast<int>(best);
}

template <typename T>
std::vector<double> log_softmax_last(const nn::Matrix<T>& logits) {
  const auto row = logits.row(logits.rows() - 1);
  const double m = static_cast<double>(row.maxCoeff());
  double z = 0.0;
  for (Eigen::Index i = 0; i < row.size(); ++i) z += std::exp(static_cast<double>(row(i)) - m);
  const double lse = m + std::log(z);
  std::vector<double> out(static_cast<std::size_t>(row.size()));
  for (Eigen::Index i = 0; i < row.size(); ++i) out[static_cast<std::size_t>(i)] = static_cast<double>(row(i)) - lse;
  return out;
}

struct DecodeState {
  std::vector<int> target_in{ReservedSymbols::kBos};
  std::vector<std::vector<int>> factor_in;
  Hypothesis hyp;
  bool finished = false;

  explicit DecodeState(std::size_t streams) {
    factor_in.assign(streams, {kShiftLabel});
    hyp.factors.assign(streams, {});
  }
};

/// Consumes one decoder step's factor outputs: at step 0 the SHIFT
/// prediction, afterwards the label of the previous word.
template <typename T>
void take_factors(const std::vector<nn::Matrix<T>>& logits, DecodeState& st, std::size_t step) {
  for (std::size_t s = 0; s + 1 < logits.size(); ++s) {
    const auto lp = log_softmax_last(logits[s + 1]);
    int label = kShiftLabel;
    if (step > 0) {
      label = argmax_label(logits[s + 1].row(logits[s + 1].rows() - 1));
      st.hyp.factors[s].push_back(label);
    }
    st.hyp.log_prob += lp[static_cast<std::size_t>(label)];
  }
}

template <typename T>
void push_word(DecodeState& st, int word, std::size_t streams) {
  st.target_in.push_back(word);
  for (std::size_t s = 0; s < streams; ++s) {
    const auto& f = st.hyp.factors[s];
    st.factor_in[s].push_back(f.empty() ? kShiftLabel : f.back());
  }
}

}  // namespace

FactoredSentence Hypothesis::factored(const Vocab& vocab) const {
  FactoredSentence out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    FactoredToken t{vocab.symbol(words[i]), {}};
    for (const auto& stream : factors) t.factors.push_back(i < stream.size() ? stream[i] - 1 : 0);
    out.push_back(std::move(t));
  }
  return out;
}

Sentence surface_of(const FactoredSentence& target, const ModelConfig& config) {
  Sentence tokens = forms_of(target);
  if (config.target_factors) {
    for (std::size_t s = 0; s < config.factor_streams.size(); ++s) {
      if (config.factor_streams[s].name == "case") {
        tokens = recombine_case(target, s);
        break;
      }
    }
  }
  // A dangling continuation can only come from a truncated hypothesis.
  if (!tokens.empty() && tokens.back().size() > kContinuationMarker.size() &&
      tokens.back().ends_with(kContinuationMarker))
    tokens.back().resize(tokens.back().size() - kContinuationMarker.size());
  return bpe_restore(tokens);
}

FactoredExample source_example(const FactoredSentence& source, const Vocab& vocab,
                               const ModelConfig& config) {
  FactoredPair pair{source, {}};
  return make_example(pair, vocab, config);
}

template <typename T>
Hypothesis greedy_translate(const FactoredSeq2Seq<T>& model, const Vocab& vocab,
                            const FactoredSentence& source, int max_len) {
  const auto& config = model.config();
  const FactoredExample src = source_example(source, vocab, config);
  const auto memory = model.encode(src.source, src.source_factors);
  const auto streams = static_cast<std::size_t>(config.num_target_streams());
  DecodeState st(streams);
  for (std::size_t step = 0;; ++step) {
    const auto logits = model.decode(memory, st.target_in, st.factor_in);
    take_factors(logits, st, step);
    if (step == static_cast<std::size_t>(max_len)) {
      // The factor of the last word has been read; the word itself is dropped.
      st.hyp.truncated = true;
      break;
    }
    const auto lp = log_softmax_last(logits[0]);
    const int word = argmax_word(logits[0].row(logits[0].rows() - 1));
    st.hyp.word_log_prob += lp[static_cast<std::size_t>(word)];
    st.hyp.log_prob += lp[static_cast<std::size_t>(word)];
    if (word == ReservedSymbols::kEos) break;
    st.hyp.words.push_back(word);
    push_word<T>(st, word, streams);
  }
  return st.hyp;
}

template <typename T>
Hypothesis beam_translate(const FactoredSeq2Seq<T>& model, const Vocab& vocab,
                          const FactoredSentence& source, int beam_size, int max_len) {
  if (beam_size < 1) throw Error("beam_size must be at least 1");
  const auto& config = model.config();
  const FactoredExample src = source_example(source, vocab, config);
  const auto memory = model.encode(src.source, src.source_factors);
  const auto streams = static_cast<std::size_t>(config.num_target_streams());
  const auto beam = static_cast<std::size_t>(beam_size);

  std::vector<DecodeState> alive{DecodeState(streams)};
  std::vector<Hypothesis> finished;
  auto normalized = [](const Hypothesis& h) {
    return h.word_log_prob / static_cast<double>(h.words.size() + (h.truncated ? 0 : 1));
  };

  for (std::size_t step = 0; !alive.empty(); ++step) {
    struct Candidate {
      std::size_t parent;
      int word;
      double score;
    };
    std::vector<Candidate> candidates;
    std::vector<std::vector<double>> word_lps(alive.size());
    for (std::size_t i = 0; i < alive.size(); ++i) {
      auto& st = alive[i];
      const auto logits = model.decode(memory, st.target_in, st.factor_in);
      take_factors(logits, st, step);
      if (step == static_cast<std::size_t>(max_len)) {
        st.hyp.truncated = true;
        finished.push_back(st.hyp);
        continue;
      }
      word_lps[i] = log_softmax_last(logits[0]);
      std::vector<int> order(word_lps[i].size());
      for (std::size_t w = 0; w < order.size(); ++w) order[w] = static_cast<int>(w);
      const std::size_t k = std::min(beam, order.size());
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                        [&](int a, int b) {
                          const double la = word_lps[i][static_cast<std::size_t>(a)];
                          const double lb = word_lps[i][static_cast<std::size_t>(b)];
                          return la != lb ? la > lb : a < b;
                        });
      for (std::size_t j = 0; j < k; ++j)
        candidates.push_back({i, order[j], st.hyp.word_log_prob + word_lps[i][static_cast<std::size_t>(order[j])]});
    }
    if (step == static_cast<std::size_t>(max_len)) break;
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Candidate& a, const Candidate& b) { return a.score > b.score; });

    std::vector<DecodeState> next;
    std::size_t taken = 0;
    for (const auto& c : candidates) {
      if (taken++ == beam) break;
      DecodeState st = alive[c.parent];
      const double lp = word_lps[c.parent][static_cast<std::size_t>(c.word)];
      st.hyp.word_log_prob += lp;
      st.hyp.log_prob += lp;
      if (c.word == ReservedSymbols::kEos) {
        finished.push_back(std::move(st.hyp));
      } else {
        st.hyp.words.push_back(c.word);
        push_word<T>(st, c.word, streams);
        next.push_back(std::move(st));
      }
    }
    alive = std::move(next);
    if (finished.size() >= beam) break;
  }

  // Finished hypotheses outrank truncated ones; among equals the best
  // length-normalized word score wins, earliest on ties.
  const Hypothesis* best = nullptr;
  for (const auto& h : finished) {
    if (!best || (best->truncated && !h.truncated) ||
        (best->truncated == h.truncated && normalized(h) > normalized(*best)))
      best = &h;
  }
  return best ? *best : Hypothesis{};
}

template <typename T>
ForcedScore forced_score(const FactoredSeq2Seq<T>& model, const Vocab& vocab,
                         const FactoredSentence& source, const FactoredSentence& target,
                         bool include_factors) {
  std::size_t unknown = 0;
  const FactoredExample ex = make_example({source, target}, vocab, model.config(), nullptr, &unknown);
  const auto logits = model.forward(ex);
  ForcedScore out;
  out.has_unknown = unknown > 0;
  out.per_position.assign(ex.target_out.size(), 0.0);
  const nn::Matrix<T> words = nn::log_softmax_rows(logits[0]);
  for (std::size_t t = 0; t < ex.target_out.size(); ++t) {
    const double lp = static_cast<double>(words(static_cast<Eigen::Index>(t), ex.target_out[t]));
    out.word_log_prob += lp;
    out.per_position[t] += lp;
  }
  if (include_factors) {
    for (std::size_t s = 0; s + 1 < logits.size(); ++s) {
      const nn::Matrix<T> lp = nn::log_softmax_rows(logits[s + 1]);
      for (std::size_t t = 0; t < ex.factor_out[s].size(); ++t)
        out.per_position[t] += static_cast<double>(lp(static_cast<Eigen::Index>(t), ex.factor_out[s][t]));
    }
  }
  for (double v : out.per_position) out.log_prob += v;
  return out;
}

void ProfessionPair::validate() const {
  if (masculine == feminine)
    throw Error("profession '" + english + "' has identical masculine and feminine forms");
}

std::vector<ProfessionPair> read_profession_pairs(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::vector<ProfessionPair> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto a = line.find('\t');
    const auto b = a == std::string::npos ? a : line.find('\t', a + 1);
    if (b == std::string::npos)
      throw Error(path.string() + ":" + std::to_string(lineno) + ": expected english<TAB>masculine<TAB>feminine");
    ProfessionPair p{line.substr(0, a), line.substr(a + 1, b - a - 1), line.substr(b + 1)};
    p.validate();
    out.push_back(std::move(p));
  }
  return out;
}

std::size_t count_phrase(const std::vector<Sentence>& sentences, const Sentence& phrase) {
  if (phrase.empty()) return 0;
  std::size_t n = 0;
  for (const auto& s : sentences) {
    if (s.size() < phrase.size()) continue;
    for (std::size_t i = 0; i + phrase.size() <= s.size(); ++i)
      if (std::equal(phrase.begin(), phrase.end(), s.begin() + static_cast<std::ptrdiff_t>(i))) ++n;
  }
  return n;
}

std::vector<ProfessionPair> count_and_filter(std::vector<ProfessionPair> pairs,
                                             const std::vector<Sentence>& target_side,
                                             std::size_t min_total) {
  std::vector<ProfessionPair> kept;
  for (auto& p : pairs) {
    p.count_masc = count_phrase(target_side, tokenize(p.masculine));
    p.count_fem = count_phrase(target_side, tokenize(p.feminine));
    if (p.count_masc + p.count_fem >= min_total) kept.push_back(std::move(p));
  }
  return kept;
}

template <typename T>
std::vector<PairChoice> score_pairs(const FactoredSeq2Seq<T>& model, const Vocab& vocab,
                                    const std::vector<ProfessionPair>& pairs,
                                    const PhraseEncoder& encode, bool include_factors) {
  std::vector<PairChoice> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    p.validate();
    const FactoredSentence src = encode(p.english, Side::Source);
    PairChoice c;
    c.masculine_score = forced_score(model, vocab, src, encode(p.masculine, Side::Target), include_factors).log_prob;
    c.feminine_score = forced_score(model, vocab, src, encode(p.feminine, Side::Target), include_factors).log_prob;
    c.margin = c.masculine_score - c.feminine_score;
    c.tie = c.margin == 0.0;
    c.choice = c.margin >= 0.0 ? GenderFactor::Masculine : GenderFactor::Feminine;
    out.push_back(c);
  }
  return out;
}

void write_pair_scores(const std::filesystem::path& path, const std::vector<ProfessionPair>& pairs,
                       const std::vector<PairChoice>& choices) {
  if (pairs.size() != choices.size()) throw Error("pair/choice count mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << std::setprecision(9);
  out << "english\tmasculine\tfeminine\tcount_masc\tcount_fem\ttraining_masculine_ratio\t"
         "score_masc\tscore_fem\tchoice\ttie\n";
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    const auto& c = choices[i];
    const std::size_t total = p.count_masc + p.count_fem;
    out << p.english << '\t' << p.masculine << '\t' << p.feminine << '\t' << p.count_masc << '\t'
        << p.count_fem << '\t';
    if (total)
      out << training_masculine_ratio(p.count_masc, p.count_fem);
    else
      out << "NA";
    out << '\t' << c.masculine_score << '\t' << c.feminine_score << '\t' << to_string(c.choice) << '\t'
        << (c.tie ? 1 : 0) << '\n';
  }
}

#define FNMT_INSTANTIATE(T)                                                                          \
  template Hypothesis greedy_translate<T>(const FactoredSeq2Seq<T>&, const Vocab&,                   \
                                          const FactoredSentence&, int);                             \
  template Hypothesis beam_translate<T>(const FactoredSeq2Seq<T>&, const Vocab&,                     \
                                        const FactoredSentence&, int, int);                          \
  template ForcedScore forced_score<T>(const FactoredSeq2Seq<T>&, const Vocab&,                      \
                                       const FactoredSentence&, const FactoredSentence&, bool);      \
  template std::vector<PairChoice> score_pairs<T>(const FactoredSeq2Seq<T>&, const Vocab&,           \
                                                  const std::vector<ProfessionPair>&,                \
                                                  const PhraseEncoder&, bool);
FNMT_INSTANTIATE(float)
FNMT_INSTANTIATE(double)
#undef FNMT_INSTANTIATE

}  // namespace fnmt
