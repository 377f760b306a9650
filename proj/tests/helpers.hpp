// Small fixtures shared by the model tests and the acceptance suite.
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "fnmt/random.hpp"
#include "fnmt/seq2seq.hpp"

namespace fixture {

/// Vocabulary "w0".."w{n-1}" after the reserved symbols.
inline fnmt::Vocab word_vocab(int n) {
  fnmt::Vocab v;
  for (int i = 0; i < n; ++i) v.add("w" + std::to_string(i));
  return v;
}

inline fnmt::ModelConfig tiny_config(int vocab_size, bool source_factors, bool target_factors, int labels = 4) {
  fnmt::ModelConfig c;
  c.vocab_size = vocab_size;
  c.embed_dim = 8;
  c.ff_dim = 16;
  c.heads = 2;
  c.enc_layers = 1;
  c.dec_layers = 1;
  c.max_len = 32;
  c.source_factors = source_factors;
  c.target_factors = target_factors;
  if (source_factors || target_factors) c.factor_streams.push_back({"case", labels});
  return c;
}

inline fnmt::FactoredSentence random_sentence(fnmt::Rng& rng, int words, int labels, std::size_t min_len,
                                              std::size_t max_len) {
  fnmt::FactoredSentence s;
  const auto len = min_len + fnmt::uniform_index(rng, max_len - min_len + 1);
  for (std::size_t i = 0; i < len; ++i)
    s.push_back({"w" + std::to_string(fnmt::uniform_index(rng, static_cast<std::uint64_t>(words))),
                 {static_cast<int>(fnmt::uniform_index(rng, static_cast<std::uint64_t>(labels)))}});
  return s;
}

inline std::vector<fnmt::FactoredPair> random_pairs(std::uint64_t seed, std::size_t n, int words, int labels,
                                                    std::size_t min_len = 1, std::size_t max_len = 5) {
  fnmt::Rng rng(seed);
  std::vector<fnmt::FactoredPair> out;
  for (std::size_t i = 0; i < n; ++i)
    out.push_back({random_sentence(rng, words, labels, min_len, max_len),
                   random_sentence(rng, words, labels, min_len, max_len)});
  return out;
}

struct GradCheck {
  std::string worst_parameter;
  double worst_relative_error = 0.0;
  std::size_t parameters = 0;
  std::size_t entries = 0;
};

/// Central differences on every entry of every parameter. The error of a
/// parameter is ||analytic - numeric|| / max(||analytic||, ||numeric||);
/// parameters whose gradients are both below `zero` count as exact.
inline GradCheck gradient_check(fnmt::FactoredSeq2Seq<double>& model, const fnmt::FactoredBatch& batch,
                                double eps = 1e-4, double zero = 1e-10) {
  model.parameters().zero_grad();
  model.accumulate_gradients(batch);
  GradCheck out;
  for (auto& [name, p] : model.parameters().all()) {
    const fnmt::nn::Matrix<double> analytic = p.grad;
    fnmt::nn::Matrix<double> numeric(p.value.rows(), p.value.cols());
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      double& x = p.value.data()[i];
      const double saved = x;
      x = saved + eps;
      const double up = model.loss(batch).total;
      x = saved - eps;
      const double down = model.loss(batch).total;
      x = saved;
      numeric.data()[i] = (up - down) / (2.0 * eps);
    }
    const double scale = std::max(analytic.norm(), numeric.norm());
    const double err = scale < zero ? 0.0 : (analytic - numeric).norm() / scale;
    if (err >= out.worst_relative_error) {
      out.worst_relative_error = err;
      out.worst_parameter = name;
    }
    ++out.parameters;
    out.entries += static_cast<std::size_t>(p.value.size());
  }
  return out;
}

/// Checks shifted[t] = factor(word t-1) and shifted[0] = SHIFT for every
/// row of a built batch against the factored pairs it came from.
inline std::size_t time_shift_violations(const fnmt::FactoredBatch& batch,
                                         const std::vector<fnmt::FactoredPair>& pairs) {
  std::size_t bad = 0;
  for (std::size_t s = 0; s < batch.factor_out.size(); ++s) {
    for (int b = 0; b < batch.size(); ++b) {
      const auto& tgt = pairs[static_cast<std::size_t>(b)].target;
      const int len = batch.target_lengths[static_cast<std::size_t>(b)];
      if (len != static_cast<int>(tgt.size()) + 1) ++bad;
      if (batch.factor_out[s](b, 0) != fnmt::kShiftLabel) ++bad;
      for (int t = 1; t < len; ++t)
        if (batch.factor_out[s](b, t) != tgt[static_cast<std::size_t>(t - 1)].factors[s] + 1) ++bad;
      if (batch.factor_in[s](b, 0) != fnmt::kShiftLabel) ++bad;
      for (int t = 1; t < len; ++t)
        if (batch.factor_in[s](b, t) != batch.factor_out[s](b, t - 1)) ++bad;
    }
  }
  return bad;
}

}  // namespace fixture
