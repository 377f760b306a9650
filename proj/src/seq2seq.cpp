#include "fnmt/seq2seq.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace fnmt {

// ---------------------------------------------------------------------------
// Configuration

void ModelConfig::validate() const {
  if (vocab_size <= ReservedSymbols::kCount) throw Error("vocab_size must exceed the reserved ids");
  if (embed_dim <= 0 || ff_dim <= 0 || heads <= 0) throw Error("model dimensions must be positive");
  if (embed_dim % heads != 0) throw Error("embed_dim must be divisible by heads");
  if (enc_layers < 1) throw Error("encoder needs at least one layer");
  if (dec_layers < 1) throw Error("decoder needs at least one layer");
  if (max_len < 1) throw Error("max_len must be positive");
  if (factor_embed_combination != "sum") throw Error("only summed factor embeddings are supported");
  for (const auto& s : factor_streams)
    if (s.labels < 1) throw Error("factor stream '" + s.name + "' needs at least one label");
  if ((source_factors || target_factors) && factor_streams.empty())
    throw Error("factors enabled without factor streams");
}

nlohmann::json ModelConfig::to_json() const {
  nlohmann::json streams = nlohmann::json::array();
  for (const auto& s : factor_streams) streams.push_back({{"name", s.name}, {"labels", s.labels}});
  return {{"vocab_size", vocab_size},
          {"embed_dim", embed_dim},
          {"ff_dim", ff_dim},
          {"heads", heads},
          {"enc_layers", enc_layers},
          {"dec_layers", dec_layers},
          {"max_len", max_len},
          {"source_factors", source_factors},
          {"target_factors", target_factors},
          {"factor_streams", streams},
          {"tie_embeddings", tie_embeddings},
          {"factor_embed_combination", factor_embed_combination}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.vocab_size = j.at("vocab_size").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.ff_dim = j.at("ff_dim").get<int>();
  c.heads = j.at("heads").get<int>();
  c.enc_layers = j.at("enc_layers").get<int>();
  c.dec_layers = j.at("dec_layers").get<int>();
  c.max_len = j.at("max_len").get<int>();
  c.source_factors = j.at("source_factors").get<bool>();
  c.target_factors = j.at("target_factors").get<bool>();
  for (const auto& s : j.at("factor_streams"))
    c.factor_streams.push_back({s.at("name").get<std::string>(), s.at("labels").get<int>()});
  c.tie_embeddings = j.at("tie_embeddings").get<bool>();
  c.factor_embed_combination = j.at("factor_embed_combination").get<std::string>();
  c.validate();
  return c;
}

ModelConfig deep_encoder_config(int vocab_size) {
  ModelConfig c;
  c.vocab_size = vocab_size;
  c.embed_dim = 512;
  c.ff_dim = 2048;
  c.heads = 8;
  c.enc_layers = 20;
  c.dec_layers = 2;
  c.max_len = 200;
  return c;
}

// ---------------------------------------------------------------------------
// Batches

FactoredExample make_example(const FactoredPair& pair, const Vocab& vocab, const ModelConfig& config,
                             std::size_t* truncated, std::size_t* unknown) {
  const auto max_len = static_cast<std::size_t>(config.max_len);
  auto clip = [&](const FactoredSentence& s) {
    if (s.size() > max_len) {
      if (truncated) ++*truncated;
      return FactoredSentence(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(max_len));
    }
    return s;
  };
  const FactoredSentence src = clip(pair.source);
  const FactoredSentence tgt = clip(pair.target);
  auto lookup = [&](const std::string& form) {
    const int id = vocab.id(form);
    if (id == ReservedSymbols::kUnk && unknown) ++*unknown;
    return id;
  };

  FactoredExample ex;
  for (const auto& t : src) ex.source.push_back(lookup(t.form));
  ex.source.push_back(ReservedSymbols::kEos);
  const auto ns = static_cast<std::size_t>(config.num_source_streams());
  ex.source_factors.assign(ns, {});
  for (std::size_t s = 0; s < ns; ++s) {
    for (const auto& t : src) ex.source_factors[s].push_back(t.factors.at(s) + 1);
    ex.source_factors[s].push_back(kShiftLabel);
  }

  ex.target_in.push_back(ReservedSymbols::kBos);
  for (const auto& t : tgt) {
    const int id = lookup(t.form);
    ex.target_in.push_back(id);
    ex.target_out.push_back(id);
  }
  ex.target_out.push_back(ReservedSymbols::kEos);

  const auto nt = static_cast<std::size_t>(config.num_target_streams());
  ex.factor_out.assign(nt, {});
  ex.factor_in.assign(nt, {});
  for (std::size_t s = 0; s < nt; ++s) {
    auto& out = ex.factor_out[s];
    out.push_back(kShiftLabel);
    for (const auto& t : tgt) out.push_back(t.factors.at(s) + 1);
    auto& in = ex.factor_in[s];
    in.push_back(kShiftLabel);
    for (std::size_t i = 0; i + 1 < out.size(); ++i) in.push_back(out[i]);
  }
  return ex;
}

FactoredBatch build_batch(const std::vector<FactoredExample>& examples) {
  FactoredBatch b;
  const auto n = static_cast<Eigen::Index>(examples.size());
  Eigen::Index max_src = 0, max_tgt = 0;
  for (const auto& ex : examples) {
    max_src = std::max<Eigen::Index>(max_src, static_cast<Eigen::Index>(ex.source.size()));
    max_tgt = std::max<Eigen::Index>(max_tgt, static_cast<Eigen::Index>(ex.target_out.size()));
  }
  const std::size_t ns = examples.empty() ? 0 : examples.front().source_factors.size();
  const std::size_t nt = examples.empty() ? 0 : examples.front().factor_out.size();
  b.source_ids = Eigen::MatrixXi::Constant(n, max_src, ReservedSymbols::kPad);
  b.target_in = Eigen::MatrixXi::Constant(n, max_tgt, ReservedSymbols::kPad);
  b.target_out = Eigen::MatrixXi::Constant(n, max_tgt, ReservedSymbols::kPad);
  b.target_mask.setZero(n, max_tgt);
  b.source_factors.assign(ns, Eigen::MatrixXi::Constant(n, max_src, kShiftLabel));
  b.factor_in.assign(nt, Eigen::MatrixXi::Constant(n, max_tgt, kShiftLabel));
  b.factor_out.assign(nt, Eigen::MatrixXi::Constant(n, max_tgt, kShiftLabel));
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& ex = examples[static_cast<std::size_t>(r)];
    if (ex.source_factors.size() != ns || ex.factor_out.size() != nt)
      throw Error("examples in one batch disagree on factor streams");
    for (std::size_t t = 0; t < ex.source.size(); ++t) {
      b.source_ids(r, static_cast<Eigen::Index>(t)) = ex.source[t];
      for (std::size_t s = 0; s < ns; ++s)
        b.source_factors[s](r, static_cast<Eigen::Index>(t)) = ex.source_factors[s][t];
    }
    for (std::size_t t = 0; t < ex.target_out.size(); ++t) {
      const auto c = static_cast<Eigen::Index>(t);
      b.target_in(r, c) = ex.target_in[t];
      b.target_out(r, c) = ex.target_out[t];
      b.target_mask(r, c) = 1;
      for (std::size_t s = 0; s < nt; ++s) {
        b.factor_in[s](r, c) = ex.factor_in[s][t];
        b.factor_out[s](r, c) = ex.factor_out[s][t];
      }
    }
    b.source_lengths.push_back(static_cast<int>(ex.source.size()));
    b.target_lengths.push_back(static_cast<int>(ex.target_out.size()));
  }
  return b;
}

FactoredBatch build_batch(const std::vector<FactoredPair>& pairs, const Vocab& vocab,
                          const ModelConfig& config) {
  std::vector<FactoredExample> examples;
  examples.reserve(pairs.size());
  std::size_t truncated = 0, unknown = 0;
  for (const auto& p : pairs) examples.push_back(make_example(p, vocab, config, &truncated, &unknown));
  FactoredBatch b = build_batch(examples);
  b.truncated = truncated;
  b.unknown = unknown;
  return b;
}

FactoredExample FactoredBatch::example(int row) const {
  FactoredExample ex;
  const int ls = source_lengths.at(static_cast<std::size_t>(row));
  const int lt = target_lengths.at(static_cast<std::size_t>(row));
  for (int t = 0; t < ls; ++t) ex.source.push_back(source_ids(row, t));
  ex.source_factors.resize(source_factors.size());
  for (std::size_t s = 0; s < source_factors.size(); ++s)
    for (int t = 0; t < ls; ++t) ex.source_factors[s].push_back(source_factors[s](row, t));
  for (int t = 0; t < lt; ++t) {
    ex.target_in.push_back(target_in(row, t));
    ex.target_out.push_back(target_out(row, t));
  }
  ex.factor_in.resize(factor_in.size());
  ex.factor_out.resize(factor_out.size());
  for (std::size_t s = 0; s < factor_out.size(); ++s) {
    for (int t = 0; t < lt; ++t) {
      ex.factor_in[s].push_back(factor_in[s](row, t));
      ex.factor_out[s].push_back(factor_out[s](row, t));
    }
  }
  return ex;
}

std::size_t FactoredBatch::positions() const {
  std::size_t n = 0;
  for (int l : target_lengths) n += static_cast<std::size_t>(l);
  return n;
}

// ---------------------------------------------------------------------------
// Model

template <typename T>
struct FactoredSeq2Seq<T>::Impl {
  using LN = nn::LayerNorm<T>;
  using Attn = nn::Attention<T>;
  using FF = nn::FeedForward<T>;

  struct EncoderLayer {
    LN ln1, ln2;
    Attn attn;
    FF ff;
  };
  struct DecoderLayer {
    LN ln1, ln2, ln3;
    Attn self_attn, cross_attn;
    FF ff;
  };
  struct EncoderLayerCache {
    typename LN::Cache ln1, ln2;
    typename Attn::Cache attn;
    typename FF::Cache ff;
  };
  struct DecoderLayerCache {
    typename LN::Cache ln1, ln2, ln3;
    typename Attn::Cache self_attn, cross_attn;
    typename FF::Cache ff;
  };
  struct EncoderCache {
    std::vector<EncoderLayerCache> layers;
    typename LN::Cache final;
  };
  struct DecoderCache {
    std::vector<DecoderLayerCache> layers;
    typename LN::Cache final;
    Mat hidden;
  };

  int dim = 0;
  T embed_scale = T(1);
  nn::Parameter<T>* source_embed = nullptr;
  nn::Parameter<T>* target_embed = nullptr;
  nn::Parameter<T>* output_weight = nullptr;  // vocab x dim
  nn::Parameter<T>* output_bias = nullptr;
  std::vector<nn::Parameter<T>*> source_factor_embed;
  std::vector<nn::Parameter<T>*> target_factor_embed;
  std::vector<nn::Linear<T>> factor_heads;
  std::vector<EncoderLayer> encoder;
  std::vector<DecoderLayer> decoder;
  LN encoder_final, decoder_final;
  Mat positions;

  Mat position_rows(Eigen::Index n) const {
    if (n <= positions.rows()) return positions.topRows(n);
    return nn::positional_encoding<T>(n, dim);
  }

  static void check_ids(const std::vector<int>& ids, int limit, const char* what) {
    for (int id : ids)
      if (id < 0 || id >= limit)
        throw Error(std::string("contract violation: ") + what + " id " + std::to_string(id) +
                    " outside [0," + std::to_string(limit) + ")");
  }

  Mat embed(const nn::Parameter<T>& words, const std::vector<nn::Parameter<T>*>& factor_tables,
            const std::vector<int>& ids, const std::vector<std::vector<int>>& factors) const {
    const auto n = static_cast<Eigen::Index>(ids.size());
    if (factors.size() != factor_tables.size())
      throw Error("contract violation: expected " + std::to_string(factor_tables.size()) +
                  " factor streams, got " + std::to_string(factors.size()));
    check_ids(ids, static_cast<int>(words.value.rows()), "word");
    Mat x(n, dim);
    for (Eigen::Index t = 0; t < n; ++t) x.row(t) = words.value.row(ids[static_cast<std::size_t>(t)]);
    for (std::size_t s = 0; s < factor_tables.size(); ++s) {
      if (factors[s].size() != ids.size())
        throw Error("contract violation: factor stream length differs from word stream");
      check_ids(factors[s], static_cast<int>(factor_tables[s]->value.rows()), "factor");
      for (Eigen::Index t = 0; t < n; ++t)
        x.row(t) += factor_tables[s]->value.row(factors[s][static_cast<std::size_t>(t)]);
    }
    x *= embed_scale;
    x += position_rows(n);
    return x;
  }

  void embed_backward(nn::Parameter<T>& words, const std::vector<nn::Parameter<T>*>& factor_tables,
                      const std::vector<int>& ids, const std::vector<std::vector<int>>& factors,
                      const Mat& dx) const {
    for (Eigen::Index t = 0; t < dx.rows(); ++t) {
      words.grad.row(ids[static_cast<std::size_t>(t)]) += embed_scale * dx.row(t);
      for (std::size_t s = 0; s < factor_tables.size(); ++s)
        factor_tables[s]->grad.row(factors[s][static_cast<std::size_t>(t)]) += embed_scale * dx.row(t);
    }
  }

  Mat run_encoder(const std::vector<int>& source, const std::vector<std::vector<int>>& factors,
                  EncoderCache* cache) const {
    Mat x = embed(*source_embed, source_factor_embed, source, factors);
    if (cache) cache->layers.resize(encoder.size());
    for (std::size_t l = 0; l < encoder.size(); ++l) {
      const auto& layer = encoder[l];
      EncoderLayerCache* c = cache ? &cache->layers[l] : nullptr;
      const Mat a = layer.ln1.forward(x, c ? &c->ln1 : nullptr);
      x += layer.attn.forward(a, a, c ? &c->attn : nullptr);
      const Mat b = layer.ln2.forward(x, c ? &c->ln2 : nullptr);
      x += layer.ff.forward(b, c ? &c->ff : nullptr);
    }
    return encoder_final.forward(x, cache ? &cache->final : nullptr);
  }

  Mat run_decoder(const Mat& memory, const std::vector<int>& target_in,
                  const std::vector<std::vector<int>>& factor_in, DecoderCache* cache) const {
    Mat x = embed(*target_embed, target_factor_embed, target_in, factor_in);
    if (cache) cache->layers.resize(decoder.size());
    for (std::size_t l = 0; l < decoder.size(); ++l) {
      const auto& layer = decoder[l];
      DecoderLayerCache* c = cache ? &cache->layers[l] : nullptr;
      const Mat a = layer.ln1.forward(x, c ? &c->ln1 : nullptr);
      x += layer.self_attn.forward(a, a, c ? &c->self_attn : nullptr);
      const Mat b = layer.ln2.forward(x, c ? &c->ln2 : nullptr);
      x += layer.cross_attn.forward(b, memory, c ? &c->cross_attn : nullptr);
      const Mat e = layer.ln3.forward(x, c ? &c->ln3 : nullptr);
      x += layer.ff.forward(e, c ? &c->ff : nullptr);
    }
    Mat h = decoder_final.forward(x, cache ? &cache->final : nullptr);
    if (cache) cache->hidden = h;
    return h;
  }

  std::vector<Mat> heads(const Mat& hidden) const {
    std::vector<Mat> out;
    out.reserve(1 + factor_heads.size());
    Mat words = hidden * output_weight->value.transpose();
    words.rowwise() += output_bias->value.row(0);
    out.push_back(std::move(words));
    for (const auto& h : factor_heads) out.push_back(h.forward(hidden));
    return out;
  }

  /// Returns d(memory).
  Mat decoder_backward(const DecoderCache& c, const Mat& memory, const std::vector<int>& target_in,
                       const std::vector<std::vector<int>>& factor_in, const Mat& d_hidden) {
    Mat dmemory = Mat::Zero(memory.rows(), memory.cols());
    Mat dx = decoder_final.backward(c.final, d_hidden);
    for (std::size_t l = decoder.size(); l-- > 0;) {
      auto& layer = decoder[l];
      const auto& lc = c.layers[l];
      dx += layer.ln3.backward(lc.ln3, layer.ff.backward(lc.ff, dx));
      auto [dq_cross, dmem] = layer.cross_attn.backward(lc.cross_attn, dx);
      dmemory += dmem;
      dx += layer.ln2.backward(lc.ln2, dq_cross);
      auto [dq_self, dkv_self] = layer.self_attn.backward(lc.self_attn, dx);
      dq_self += dkv_self;
      dx += layer.ln1.backward(lc.ln1, dq_self);
    }
    embed_backward(*target_embed, target_factor_embed, target_in, factor_in, dx);
    return dmemory;
  }

  void encoder_backward(const EncoderCache& c, const std::vector<int>& source,
                        const std::vector<std::vector<int>>& factors, const Mat& d_out) {
    Mat dx = encoder_final.backward(c.final, d_out);
    for (std::size_t l = encoder.size(); l-- > 0;) {
      auto& layer = encoder[l];
      const auto& lc = c.layers[l];
      dx += layer.ln2.backward(lc.ln2, layer.ff.backward(lc.ff, dx));
      auto [dq, dkv] = layer.attn.backward(lc.attn, dx);
      dq += dkv;
      dx += layer.ln1.backward(lc.ln1, dq);
    }
    embed_backward(*source_embed, source_factor_embed, source, factors, dx);
  }
};

template <typename T>
FactoredSeq2Seq<T>::FactoredSeq2Seq(ModelConfig config, std::uint64_t seed)
    : config_(std::move(config)) {
  config_.validate();
  build(seed);
}

template <typename T>
FactoredSeq2Seq<T>::~FactoredSeq2Seq() = default;
template <typename T>
FactoredSeq2Seq<T>::FactoredSeq2Seq(FactoredSeq2Seq&&) noexcept = default;
template <typename T>
FactoredSeq2Seq<T>& FactoredSeq2Seq<T>::operator=(FactoredSeq2Seq&&) noexcept = default;

template <typename T>
FactoredSeq2Seq<T> FactoredSeq2Seq<T>::clone() const {
  FactoredSeq2Seq copy(config_, 0);
  copy.restore(snapshot());
  return copy;
}

template <typename T>
void FactoredSeq2Seq<T>::build(std::uint64_t seed) {
  impl_ = std::make_unique<Impl>();
  auto& m = *impl_;
  const int d = config_.embed_dim;
  const int v = config_.vocab_size;
  m.dim = d;
  m.embed_scale = static_cast<T>(std::sqrt(static_cast<double>(d)));
  const double embed_std = 1.0 / std::sqrt(static_cast<double>(d));
  using nn::Init;

  auto linear = [&](const std::string& name, int in, int out) {
    nn::Linear<T> lin;
    lin.weight = &params_.add(name + ".weight", in, out, Init::Xavier, seed);
    lin.bias = &params_.add(name + ".bias", 1, out, Init::Zeros, seed);
    return lin;
  };
  auto layer_norm = [&](const std::string& name) {
    nn::LayerNorm<T> ln;
    ln.gamma = &params_.add(name + ".gamma", 1, d, Init::Ones, seed);
    ln.beta = &params_.add(name + ".beta", 1, d, Init::Zeros, seed);
    return ln;
  };
  auto attention = [&](const std::string& name, bool causal) {
    nn::Attention<T> a;
    a.q = linear(name + ".q", d, d);
    a.k = linear(name + ".k", d, d);
    a.v = linear(name + ".v", d, d);
    a.o = linear(name + ".o", d, d);
    a.heads = config_.heads;
    a.causal = causal;
    return a;
  };
  auto feed_forward = [&](const std::string& name) {
    nn::FeedForward<T> f;
    f.in = linear(name + ".in", d, config_.ff_dim);
    f.out = linear(name + ".out", config_.ff_dim, d);
    return f;
  };

  if (config_.tie_embeddings) {
    auto& shared = params_.add("embed.word", v, d, Init::Normal, seed, embed_std);
    m.source_embed = m.target_embed = m.output_weight = &shared;
  } else {
    m.source_embed = &params_.add("embed.source_word", v, d, Init::Normal, seed, embed_std);
    m.target_embed = &params_.add("embed.target_word", v, d, Init::Normal, seed, embed_std);
    m.output_weight = &params_.add("head.word.weight", v, d, Init::Normal, seed, embed_std);
  }
  m.output_bias = &params_.add("head.word.bias", 1, v, Init::Zeros, seed);

  for (std::size_t s = 0; s < static_cast<std::size_t>(config_.num_source_streams()); ++s)
    m.source_factor_embed.push_back(&params_.add("embed.source_factor." + config_.factor_streams[s].name,
                                                 config_.stream_size(s), d, Init::Normal, seed, embed_std));
  for (std::size_t s = 0; s < static_cast<std::size_t>(config_.num_target_streams()); ++s) {
    const auto& name = config_.factor_streams[s].name;
    m.target_factor_embed.push_back(
        &params_.add("embed.target_factor." + name, config_.stream_size(s), d, Init::Normal, seed, embed_std));
    m.factor_heads.push_back(linear("head." + name, d, config_.stream_size(s)));
  }

  for (int l = 0; l < config_.enc_layers; ++l) {
    const std::string p = "encoder." + std::to_string(l);
    m.encoder.push_back({layer_norm(p + ".ln1"), layer_norm(p + ".ln2"), attention(p + ".self_attn", false),
                         feed_forward(p + ".ff")});
  }
  for (int l = 0; l < config_.dec_layers; ++l) {
    const std::string p = "decoder." + std::to_string(l);
    m.decoder.push_back({layer_norm(p + ".ln1"), layer_norm(p + ".ln2"), layer_norm(p + ".ln3"),
                         attention(p + ".self_attn", true), attention(p + ".cross_attn", false),
                         feed_forward(p + ".ff")});
  }
  m.encoder_final = layer_norm("encoder.final_ln");
  m.decoder_final = layer_norm("decoder.final_ln");
  m.positions = nn::positional_encoding<T>(config_.max_len + 2, d);
}

template <typename T>
typename FactoredSeq2Seq<T>::Mat& FactoredSeq2Seq<T>::source_word_embedding() {
  return impl_->source_embed->value;
}
template <typename T>
typename FactoredSeq2Seq<T>::Mat& FactoredSeq2Seq<T>::target_word_embedding() {
  return impl_->target_embed->value;
}
template <typename T>
const typename FactoredSeq2Seq<T>::Mat& FactoredSeq2Seq<T>::target_word_embedding() const {
  return impl_->target_embed->value;
}
template <typename T>
typename FactoredSeq2Seq<T>::Mat& FactoredSeq2Seq<T>::output_projection() {
  return impl_->output_weight->value;
}
template <typename T>
typename FactoredSeq2Seq<T>::Mat& FactoredSeq2Seq<T>::factor_embedding(bool target_side, std::size_t stream) {
  auto& tables = target_side ? impl_->target_factor_embed : impl_->source_factor_embed;
  return tables.at(stream)->value;
}

template <typename T>
typename FactoredSeq2Seq<T>::Mat FactoredSeq2Seq<T>::encode(
    const std::vector<int>& source, const std::vector<std::vector<int>>& source_factors) const {
  if (source.empty()) throw Error("contract violation: empty source sequence");
  return impl_->run_encoder(source, source_factors, nullptr);
}

template <typename T>
std::vector<typename FactoredSeq2Seq<T>::Mat> FactoredSeq2Seq<T>::decode(
    const Mat& memory, const std::vector<int>& target_in,
    const std::vector<std::vector<int>>& factor_in) const {
  if (target_in.empty()) throw Error("contract violation: empty decoder input");
  return impl_->heads(impl_->run_decoder(memory, target_in, factor_in, nullptr));
}

template <typename T>
std::vector<typename FactoredSeq2Seq<T>::Mat> FactoredSeq2Seq<T>::forward(const FactoredExample& ex) const {
  return decode(encode(ex.source, ex.source_factors), ex.target_in, ex.factor_in);
}

template <typename T>
typename FactoredSeq2Seq<T>::BatchLogits FactoredSeq2Seq<T>::forward(const FactoredBatch& batch) const {
  BatchLogits out(1 + static_cast<std::size_t>(config_.num_target_streams()));
  for (int r = 0; r < batch.size(); ++r) {
    auto logits = forward(batch.example(r));
    for (std::size_t s = 0; s < logits.size(); ++s) out[s].push_back(std::move(logits[s]));
  }
  return out;
}

template <typename T>
double cross_entropy_sum(const nn::Matrix<T>& logits, const std::vector<int>& targets) {
  const nn::Matrix<T> lp = nn::log_softmax_rows(logits);
  double total = 0.0;
  for (std::size_t t = 0; t < targets.size(); ++t)
    total -= static_cast<double>(lp(static_cast<Eigen::Index>(t), targets[t]));
  return total;
}

template <typename T>
LossResult FactoredSeq2Seq<T>::loss(const FactoredBatch& batch) const {
  LossResult r;
  r.per_stream.assign(1 + static_cast<std::size_t>(config_.num_target_streams()), 0.0);
  for (int b = 0; b < batch.size(); ++b) {
    const FactoredExample ex = batch.example(b);
    const auto logits = forward(ex);
    r.per_stream[0] += cross_entropy_sum(logits[0], ex.target_out);
    for (std::size_t s = 0; s + 1 < logits.size(); ++s)
      r.per_stream[s + 1] += cross_entropy_sum(logits[s + 1], ex.factor_out[s]);
    r.positions += ex.target_out.size();
  }
  const double inv = r.positions ? 1.0 / static_cast<double>(r.positions) : 0.0;
  for (auto& v : r.per_stream) {
    v *= inv;
    r.total += v;
  }
  return r;
}

template <typename T>
LossResult FactoredSeq2Seq<T>::accumulate_gradients(const FactoredBatch& batch) {
  auto& m = *impl_;
  LossResult r;
  r.per_stream.assign(1 + static_cast<std::size_t>(config_.num_target_streams()), 0.0);
  const std::size_t positions = batch.positions();
  if (positions == 0) return r;
  const T inv = T(1) / static_cast<T>(positions);

  for (int b = 0; b < batch.size(); ++b) {
    const FactoredExample ex = batch.example(b);
    typename Impl::EncoderCache ecache;
    typename Impl::DecoderCache dcache;
    const Mat memory = m.run_encoder(ex.source, ex.source_factors, &ecache);
    const Mat& hidden = m.run_decoder(memory, ex.target_in, ex.factor_in, &dcache);
    const auto logits = m.heads(hidden);

    auto softmax_grad = [&](const Mat& z, const std::vector<int>& targets, double& ce) {
      Mat p = nn::softmax_rows(z);
      for (std::size_t t = 0; t < targets.size(); ++t) {
        const auto row = static_cast<Eigen::Index>(t);
        ce -= std::log(static_cast<double>(p(row, targets[t])));
        p(row, targets[t]) -= T(1);
      }
      return Mat(p * inv);
    };

    const Mat dwords = softmax_grad(logits[0], ex.target_out, r.per_stream[0]);
    m.output_weight->grad.noalias() += dwords.transpose() * hidden;
    m.output_bias->grad.row(0) += dwords.colwise().sum();
    Mat dhidden = dwords * m.output_weight->value;
    for (std::size_t s = 0; s < m.factor_heads.size(); ++s) {
      const Mat dz = softmax_grad(logits[s + 1], ex.factor_out[s], r.per_stream[s + 1]);
      dhidden += m.factor_heads[s].backward(hidden, dz);
    }
    const Mat dmemory = m.decoder_backward(dcache, memory, ex.target_in, ex.factor_in, dhidden);
    m.encoder_backward(ecache, ex.source, ex.source_factors, dmemory);
  }
  r.positions = positions;
  for (auto& v : r.per_stream) {
    v /= static_cast<double>(positions);
    r.total += v;
  }
  return r;
}

template <typename T>
typename FactoredSeq2Seq<T>::Snapshot FactoredSeq2Seq<T>::snapshot() const {
  Snapshot s;
  for (const auto& [name, p] : params_.all()) s.emplace(name, p.value);
  return s;
}

template <typename T>
void FactoredSeq2Seq<T>::restore(const Snapshot& snapshot) {
  for (auto& [name, p] : params_.all()) {
    auto it = snapshot.find(name);
    if (it == snapshot.end()) throw Error("snapshot lacks parameter " + name);
    if (it->second.rows() != p.value.rows() || it->second.cols() != p.value.cols())
      throw Error("snapshot shape mismatch for " + name);
    p.value = it->second;
  }
}

namespace {

constexpr char kMagic[8] = {'F', 'N', 'M', 'T', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kFormatVersion = 1;

template <typename V>
void write_pod(std::ostream& out, const V& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(V));
}
template <typename V>
V read_pod(std::istream& in) {
  V v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(V));
  if (!in) throw Error("truncated checkpoint");
  return v;
}

}  // namespace

template <typename T>
void FactoredSeq2Seq<T>::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  write_pod(out, kFormatVersion);
  write_pod(out, static_cast<std::uint32_t>(sizeof(T)));
  const std::string cfg = config_.to_json().dump();
  write_pod(out, static_cast<std::uint64_t>(cfg.size()));
  out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  write_pod(out, static_cast<std::uint64_t>(params_.all().size()));
  for (const auto& [name, p] : params_.all()) {
    write_pod(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod(out, static_cast<std::uint64_t>(p.value.rows()));
    write_pod(out, static_cast<std::uint64_t>(p.value.cols()));
    out.write(reinterpret_cast<const char*>(p.value.data()),
              static_cast<std::streamsize>(sizeof(T) * static_cast<std::size_t>(p.value.size())));
  }
  if (!out) throw Error("failed writing " + path.string());
}

template <typename T>
FactoredSeq2Seq<T> FactoredSeq2Seq<T>::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw Error("not a model checkpoint: " + path.string());
  if (read_pod<std::uint32_t>(in) != kFormatVersion) throw Error("unsupported checkpoint version");
  const auto scalar = read_pod<std::uint32_t>(in);
  if (scalar != 4 && scalar != 8) throw Error("unsupported checkpoint scalar size");
  std::string cfg(read_pod<std::uint64_t>(in), '\0');
  in.read(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  FactoredSeq2Seq model(ModelConfig::from_json(nlohmann::json::parse(cfg)), 0);
  const auto count = read_pod<std::uint64_t>(in);
  Snapshot snap;
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name(read_pod<std::uint32_t>(in), '\0');
    in.read(name.data(), static_cast<std::streamsize>(name.size()));
    const auto rows = static_cast<Eigen::Index>(read_pod<std::uint64_t>(in));
    const auto cols = static_cast<Eigen::Index>(read_pod<std::uint64_t>(in));
    Mat value(rows, cols);
    if (scalar == sizeof(T)) {
      in.read(reinterpret_cast<char*>(value.data()), static_cast<std::streamsize>(sizeof(T) * static_cast<std::size_t>(value.size())));
    } else if (scalar == 4) {
      nn::Matrix<float> raw(rows, cols);
      in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(4 * raw.size()));
      value = raw.template cast<T>();
    } else {
      nn::Matrix<double> raw(rows, cols);
      in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(8 * raw.size()));
      value = raw.template cast<T>();
    }
    if (!in) throw Error("truncated checkpoint");
    snap.emplace(std::move(name), std::move(value));
  }
  model.restore(snap);
  return model;
}

template <typename T>
double embedding_centroid_similarity(const nn::Matrix<T>& table, const std::vector<int>& group_a,
                                     const std::vector<int>& group_b) {
  if (group_a.empty() || group_b.empty()) throw Error("centroid similarity needs two non-empty groups");
  auto centroid = [&](const std::vector<int>& ids) {
    Eigen::RowVectorXd c = Eigen::RowVectorXd::Zero(table.cols());
    for (int id : ids) {
      if (id < 0 || id >= table.rows()) throw Error("embedding id out of range");
      c += table.row(id).template cast<double>();
    }
    return Eigen::RowVectorXd(c / static_cast<double>(ids.size()));
  };
  const Eigen::RowVectorXd a = centroid(group_a);
  const Eigen::RowVectorXd b = centroid(group_b);
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw Error("zero-norm centroid");
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

template class FactoredSeq2Seq<float>;
template class FactoredSeq2Seq<double>;
template double cross_entropy_sum<float>(const nn::Matrix<float>&, const std::vector<int>&);
template double cross_entropy_sum<double>(const nn::Matrix<double>&, const std::vector<int>&);
template double embedding_centroid_similarity<float>(const nn::Matrix<float>&, const std::vector<int>&,
                                                     const std::vector<int>&);
template double embedding_centroid_similarity<double>(const nn::Matrix<double>&, const std::vector<int>&,
                                                      const std::vector<int>&);

}  // namespace fnmt
