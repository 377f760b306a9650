#include "fnmt/datagen.hpp"

#include <algorithm>
#include <cmath>

#include "fnmt/random.hpp"

namespace fnmt {

namespace {

bool is_probability(double p) { return std::isfinite(p) && p >= 0.0 && p <= 1.0; }

}  // namespace

void UprSpec::validate() const {
  if (!is_probability(upper_source_fraction))
    throw Error("upper_source_fraction must lie in [0,1]");
  if (!is_probability(upr)) throw Error("upr must lie in [0,1]");
}

void AugmentSpec::validate() const {
  if (!std::isfinite(fraction) || fraction < 0.0) throw Error("augment fraction must be >= 0");
}

std::size_t round_count(double x) { return static_cast<std::size_t>(std::llround(x)); }

nlohmann::json UprRecord::to_json() const {
  return {{"kind", "upr"},
          {"spec",
           {{"upper_source_fraction", spec.upper_source_fraction},
            {"upr", spec.upr},
            {"seed", spec.seed}}},
          {"pairs", pairs},
          {"upper_source", upper_source},
          {"upper_both", upper_both},
          {"warnings", warnings}};
}

nlohmann::json AugmentRecord::to_json() const {
  return {{"kind", "augment"},
          {"spec", {{"fraction", spec.fraction}, {"seed", spec.seed}}},
          {"original", original},
          {"appended", appended},
          {"with_replacement", with_replacement}};
}

ParallelCorpus make_upr_corpus(const ParallelCorpus& corpus, const UprSpec& spec,
                               UprRecord* record) {
  spec.validate();
  ParallelCorpus out;
  out.name = corpus.name + ".upr";
  out.pairs.reserve(corpus.size());
  for (const auto& p : corpus.pairs) out.pairs.push_back({lowercase(p.source), lowercase(p.target)});

  const std::size_t n = corpus.size();
  const std::size_t k = std::min(n, round_count(spec.upper_source_fraction * static_cast<double>(n)));
  const std::size_t m = round_count(spec.upr * static_cast<double>(k));

  Rng rng(spec.seed);
  // Sampling order doubles as the sub-subset order: the first m also get
  // an uppercased target.
  const auto chosen = sample_without_replacement(rng, n, k);
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    auto& pair = out.pairs[chosen[i]];
    pair.source = uppercase(pair.source);
    if (i < m) pair.target = uppercase(pair.target);
  }

  if (record) {
    record->spec = spec;
    record->pairs = n;
    record->upper_source = k;
    record->upper_both = m;
    record->upper_source_indices = chosen;
    std::sort(record->upper_source_indices.begin(), record->upper_source_indices.end());
    record->warnings.clear();
    if (spec.upper_source_fraction > 0.0 &&
        static_cast<double>(n) < 1.0 / spec.upper_source_fraction)
      record->warnings.push_back("corpus smaller than 1/upper_source_fraction; realized fraction is coarse");
  }
  return out;
}

ParallelCorpus augment_uppercase(const ParallelCorpus& corpus, const AugmentSpec& spec,
                                 AugmentRecord* record) {
  spec.validate();
  ParallelCorpus out = corpus;
  out.name = corpus.name + ".aug";
  const std::size_t n = corpus.size();
  const std::size_t m = n == 0 ? 0 : round_count(spec.fraction * static_cast<double>(n));
  const bool with_replacement = spec.fraction > 1.0;

  Rng rng(spec.seed);
  std::vector<std::size_t> picks;
  if (with_replacement) {
    picks.reserve(m);
    for (std::size_t i = 0; i < m; ++i) picks.push_back(static_cast<std::size_t>(uniform_index(rng, n)));
  } else {
    picks = sample_without_replacement(rng, n, m);
  }
  out.pairs.reserve(n + picks.size());
  for (std::size_t idx : picks)
    out.pairs.push_back({uppercase(corpus.pairs[idx].source), uppercase(corpus.pairs[idx].target)});

  if (record) {
    record->spec = spec;
    record->original = n;
    record->appended = picks.size();
    record->with_replacement = with_replacement;
    record->sampled_indices = picks;
  }
  return out;
}

std::vector<double> upr_grid() { return {0.0, 0.2, 0.4, 0.6, 0.8, 1.0}; }

std::vector<double> augment_grid() {
  std::vector<double> grid;
  for (int e = -5; e <= 5; ++e) grid.push_back(std::ldexp(1.0, e) / 100.0);
  return grid;
}

}  // namespace fnmt
