#include "fnmt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include "fnmt/factorize.hpp"
#include "fnmt/unicode.hpp"

namespace fnmt {

namespace {

using Ngram = std::vector<std::string>;

std::map<Ngram, std::size_t> ngram_counts(const Sentence& s, std::size_t n) {
  std::map<Ngram, std::size_t> out;
  if (s.size() < n) return out;
  for (std::size_t i = 0; i + n <= s.size(); ++i)
    ++out[Ngram(s.begin() + static_cast<std::ptrdiff_t>(i), s.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return out;
}

std::optional<CaseFactor> safe_case(const std::string& token) {
  try {
    return case_class(token);
  } catch (const MixedCaseError&) {
    return std::nullopt;
  }
}

double token_ratio(const std::vector<Sentence>& sentences, CaseFactor wanted) {
  std::size_t hits = 0, total = 0;
  for (const auto& s : sentences) {
    for (const auto& t : s) {
      ++total;
      if (safe_case(t) == wanted) ++hits;
    }
  }
  if (total == 0) throw Error("empty corpus");
  return static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace

nlohmann::json BleuScore::to_json() const {
  return {{"score", score},
          {"precisions", precisions},
          {"matches", matches},
          {"totals", totals},
          {"brevity_penalty", brevity_penalty},
          {"hyp_length", hyp_length},
          {"ref_length", ref_length},
          {"effective_order", effective_order},
          {"smoothing", kBleuSmoothing}};
}

BleuScore bleu(const std::vector<Sentence>& hypotheses, const std::vector<Sentence>& references,
               bool case_insensitive) {
  if (hypotheses.empty()) throw Error("empty hypothesis corpus");
  if (hypotheses.size() != references.size())
    throw Error("hypothesis and reference counts differ");
  BleuScore b;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    const Sentence hyp = case_insensitive ? lowercase(hypotheses[i]) : hypotheses[i];
    const Sentence ref = case_insensitive ? lowercase(references[i]) : references[i];
    b.hyp_length += hyp.size();
    b.ref_length += ref.size();
    for (std::size_t n = 1; n <= 4; ++n) {
      const auto h = ngram_counts(hyp, n);
      const auto r = ngram_counts(ref, n);
      for (const auto& [g, c] : h) {
        b.totals[n - 1] += c;
        auto it = r.find(g);
        if (it != r.end()) b.matches[n - 1] += std::min(c, it->second);
      }
    }
  }
  if (b.hyp_length == 0) {
    b.score = 0.0;
    b.brevity_penalty = 0.0;
    b.effective_order = 0;
    return b;
  }
  double log_sum = 0.0;
  int orders = 0;
  for (std::size_t n = 0; n < 4; ++n) {
    if (b.totals[n] == 0) {
      b.precisions[n] = 0.0;
      continue;
    }
    b.precisions[n] = b.matches[n] > 0
                          ? static_cast<double>(b.matches[n]) / static_cast<double>(b.totals[n])
                          : 1.0 / (2.0 * static_cast<double>(b.totals[n]));
    log_sum += std::log(b.precisions[n]);
    ++orders;
  }
  b.effective_order = orders;
  b.brevity_penalty = b.hyp_length >= b.ref_length
                          ? 1.0
                          : std::exp(1.0 - static_cast<double>(b.ref_length) / static_cast<double>(b.hyp_length));
  b.score = 100.0 * b.brevity_penalty * std::exp(log_sum / orders);
  b.score = std::min(b.score, 100.0);
  return b;
}

bool is_all_uppercased(const Sentence& sentence) {
  bool any = false;
  for (const auto& t : sentence) {
    for (char32_t c : unicode::decode(t)) {
      if (!unicode::is_cased(c)) continue;
      if (!unicode::is_upper(c)) return false;
      any = true;
    }
  }
  return any;
}

double uppercased_token_ratio(const std::vector<Sentence>& sentences) {
  return token_ratio(sentences, CaseFactor::Uppercased);
}

double capitalized_token_ratio(const std::vector<Sentence>& sentences) {
  return token_ratio(sentences, CaseFactor::Capitalized);
}

double uppercased_sentence_ratio(const std::vector<Sentence>& sentences) {
  if (sentences.empty()) throw Error("empty corpus");
  const auto n = std::count_if(sentences.begin(), sentences.end(), is_all_uppercased);
  return static_cast<double>(n) / static_cast<double>(sentences.size());
}

UprCounts upr_counts(const ParallelCorpus& corpus) {
  UprCounts c;
  for (const auto& p : corpus.pairs) {
    if (!is_all_uppercased(p.source)) continue;
    ++c.upper_source;
    if (is_all_uppercased(p.target)) ++c.upper_both;
  }
  return c;
}

std::optional<double> upr(const ParallelCorpus& corpus) {
  const UprCounts c = upr_counts(corpus);
  if (c.upper_source == 0) return std::nullopt;
  return static_cast<double>(c.upper_both) / static_cast<double>(c.upper_source);
}

double training_masculine_ratio(std::size_t count_masculine, std::size_t count_feminine) {
  const std::size_t total = count_masculine + count_feminine;
  if (total == 0) throw Error("training masculine ratio undefined for zero counts");
  return static_cast<double>(count_masculine) / static_cast<double>(total);
}

nlohmann::json BinReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& b : bins)
    rows.push_back({{"mean_training_ratio", b.mean_training_ratio},
                    {"predicted_ratio", b.predicted_ratio},
                    {"count", b.count}});
  return {{"bins", rows}, {"mse", mse}, {"per_pair_mse", per_pair_mse}};
}

BinReport bin_analysis(std::vector<BinInput> pairs, std::size_t n_bins) {
  if (n_bins == 0) throw Error("need at least one bin");
  if (pairs.size() < n_bins)
    throw Error("bin analysis needs at least " + std::to_string(n_bins) + " pairs, got " +
                std::to_string(pairs.size()));
  std::stable_sort(pairs.begin(), pairs.end(), [](const BinInput& a, const BinInput& b) {
    if (a.training_ratio != b.training_ratio) return a.training_ratio < b.training_ratio;
    return a.masculine_choice < b.masculine_choice;
  });
  BinReport report;
  const std::size_t base = pairs.size() / n_bins;
  const std::size_t extra = pairs.size() % n_bins;
  std::size_t at = 0;
  for (std::size_t b = 0; b < n_bins; ++b) {
    const std::size_t size = base + (b < extra ? 1 : 0);
    Bin bin;
    bin.count = size;
    double masc = 0.0;
    for (std::size_t i = at; i < at + size; ++i) {
      bin.mean_training_ratio += pairs[i].training_ratio;
      masc += pairs[i].masculine_choice ? 1.0 : 0.0;
    }
    bin.mean_training_ratio /= static_cast<double>(size);
    bin.predicted_ratio = masc / static_cast<double>(size);
    const double diff = bin.predicted_ratio - bin.mean_training_ratio;
    report.mse += diff * diff;
    report.bins.push_back(bin);
    at += size;
  }
  report.mse /= static_cast<double>(n_bins);
  for (const auto& p : pairs) {
    const double diff = (p.masculine_choice ? 1.0 : 0.0) - p.training_ratio;
    report.per_pair_mse += diff * diff;
  }
  report.per_pair_mse /= static_cast<double>(pairs.size());
  return report;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw Error("spearman needs two equal-length samples");
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va == 0.0 || vb == 0.0) return 0.0;
  return cov / std::sqrt(va * vb);
}

nlohmann::json metric_line(const std::string& name, double value, nlohmann::json details) {
  return {{"metric", name}, {"value", value}, {"details", std::move(details)}};
}

void append_report(const std::filesystem::path& path, const nlohmann::json& line) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw Error("cannot write " + path.string());
  out << line.dump() << '\n';
}

}  // namespace fnmt
