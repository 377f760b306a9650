#include "fnmt/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "fnmt/metrics.hpp"
#include "fnmt/random.hpp"

namespace fnmt {

// ---------------------------------------------------------------------------
// Configuration

std::string FactorSetup::name() const {
  if (source && target) return "both";
  if (source) return "source";
  if (target) return "target";
  return "none";
}

FactorSetup FactorSetup::from_name(const std::string& name, std::string attribute) {
  FactorSetup f;
  f.attribute = std::move(attribute);
  if (name == "none") return f;
  if (name == "source") f.source = true;
  else if (name == "target") f.target = true;
  else if (name == "both") f.source = f.target = true;
  else throw Error("unknown factor setup '" + name + "' (expected none|source|target|both)");
  return f;
}

namespace {

void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw Error("config section '" + where + "' must be an object");
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key)) throw Error("unknown config key '" + where + "." + key + "'");
}

template <typename V>
void read(const nlohmann::json& j, const char* key, V& out) {
  if (j.contains(key)) out = j.at(key).get<V>();
}

}  // namespace

nlohmann::json ExperimentConfig::to_json() const {
  return {{"seed", seed},
          {"data",
           {{"train_source", data.train_source},
            {"train_target", data.train_target},
            {"valid_source", data.valid_source},
            {"valid_target", data.valid_target},
            {"test_source", data.test_source},
            {"test_target", data.test_target},
            {"lexicon", data.lexicon},
            {"pairs", data.pairs},
            {"upper_source_fraction", data.upper_source_fraction},
            {"upr", data.upr},
            {"augment_fraction", data.augment_fraction},
            {"uppercase_test_source", data.uppercase_test_source}}},
          {"factors", {{"attribute", factors.attribute}, {"source", factors.source}, {"target", factors.target}}},
          {"subword",
           {{"enabled", subword.enabled},
            {"num_merges", subword.num_merges},
            {"min_frequency", subword.min_frequency},
            {"case_safe", subword.case_safe}}},
          {"model",
           {{"embed_dim", model.embed_dim},
            {"ff_dim", model.ff_dim},
            {"heads", model.heads},
            {"enc_layers", model.enc_layers},
            {"dec_layers", model.dec_layers},
            {"max_len", model.max_len},
            {"tie_embeddings", model.tie_embeddings}}},
          {"train", train.to_json()},
          {"eval",
           {{"beam_size", eval.beam_size},
            {"max_len", eval.max_len},
            {"include_factors", eval.include_factors},
            {"min_pair_count", eval.min_pair_count},
            {"bins", eval.bins}}}};
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  check_keys(j, {"seed", "data", "factors", "subword", "model", "train", "eval"}, "config");
  read(j, "seed", c.seed);
  if (j.contains("data")) {
    const auto& d = j.at("data");
    check_keys(d, {"train_source", "train_target", "valid_source", "valid_target", "test_source", "test_target",
                   "lexicon", "pairs", "upper_source_fraction", "upr", "augment_fraction", "uppercase_test_source"},
               "data");
    read(d, "train_source", c.data.train_source);
    read(d, "train_target", c.data.train_target);
    read(d, "valid_source", c.data.valid_source);
    read(d, "valid_target", c.data.valid_target);
    read(d, "test_source", c.data.test_source);
    read(d, "test_target", c.data.test_target);
    read(d, "lexicon", c.data.lexicon);
    read(d, "pairs", c.data.pairs);
    read(d, "upper_source_fraction", c.data.upper_source_fraction);
    read(d, "upr", c.data.upr);
    read(d, "augment_fraction", c.data.augment_fraction);
    read(d, "uppercase_test_source", c.data.uppercase_test_source);
  }
  if (j.contains("factors")) {
    const auto& f = j.at("factors");
    check_keys(f, {"attribute", "source", "target"}, "factors");
    read(f, "attribute", c.factors.attribute);
    read(f, "source", c.factors.source);
    read(f, "target", c.factors.target);
    if (c.factors.attribute != "case" && c.factors.attribute != "gender")
      throw Error("factors.attribute must be 'case' or 'gender'");
  }
  if (j.contains("subword")) {
    const auto& s = j.at("subword");
    check_keys(s, {"enabled", "num_merges", "min_frequency", "case_safe"}, "subword");
    read(s, "enabled", c.subword.enabled);
    read(s, "num_merges", c.subword.num_merges);
    read(s, "min_frequency", c.subword.min_frequency);
    read(s, "case_safe", c.subword.case_safe);
  }
  if (j.contains("model")) {
    const auto& m = j.at("model");
    check_keys(m, {"embed_dim", "ff_dim", "heads", "enc_layers", "dec_layers", "max_len", "tie_embeddings"}, "model");
    read(m, "embed_dim", c.model.embed_dim);
    read(m, "ff_dim", c.model.ff_dim);
    read(m, "heads", c.model.heads);
    read(m, "enc_layers", c.model.enc_layers);
    read(m, "dec_layers", c.model.dec_layers);
    read(m, "max_len", c.model.max_len);
    read(m, "tie_embeddings", c.model.tie_embeddings);
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    std::set<std::string> keys;
    const nlohmann::json defaults = TrainOptions{}.to_json();
    for (const auto& [k, _] : defaults.items()) keys.insert(k);
    check_keys(t, keys, "train");
    c.train = TrainOptions::from_json(t);
  }
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    check_keys(e, {"beam_size", "max_len", "include_factors", "min_pair_count", "bins"}, "eval");
    read(e, "beam_size", c.eval.beam_size);
    read(e, "max_len", c.eval.max_len);
    read(e, "include_factors", c.eval.include_factors);
    read(e, "min_pair_count", c.eval.min_pair_count);
    read(e, "bins", c.eval.bins);
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw Error("invalid config " + path.string() + ": " + e.what());
  }
}

std::string ExperimentConfig::hash() const {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : to_json().dump()) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Pipeline

Pipeline::Pipeline(FactorSetup factors, SubwordSetup subword)
    : factors_(std::move(factors)), subword_(subword) {}

void Pipeline::fit(const ParallelCorpus& train, const GenderLexicon* lexicon) {
  if (train.empty()) throw Error("empty corpus");
  {
    // One truecaser over both sides; source and target share the vocabulary.
    std::vector<Sentence> all = side_of(train, Side::Source);
    auto tgt = side_of(train, Side::Target);
    all.insert(all.end(), tgt.begin(), tgt.end());
    truecaser_ = truecase_train(all);
    for (auto& s : all) s = truecase_apply(s, truecaser_);
    if (subword_.enabled) bpe_ = bpe_train(all, {subword_.num_merges, subword_.min_frequency});
  }
  if (lexicon) lexicon_ = *lexicon;
}

FactoredSentence Pipeline::prepare(const Sentence& tokens, Side side) const {
  const bool factored = side == Side::Source ? factors_.source : factors_.target;
  FactoredSentence out;
  if (factors_.attribute == "gender" && factored) {
    for (const auto& word : tokens) {
      const GenderFactor g = lexicon_.lookup(word);
      const std::vector<Token> pieces =
          subword_.enabled ? bpe_segment_word(word, bpe_, subword_.case_safe) : std::vector<Token>{word};
      const auto labels = broadcast_factors(g, pieces);
      for (std::size_t i = 0; i < pieces.size(); ++i)
        out.push_back({pieces[i], {static_cast<int>(labels[i])}});
    }
    return out;
  }
  const Sentence segmented = subword_.enabled ? bpe_apply(tokens, bpe_, subword_.case_safe) : tokens;
  if (factored) return factor_case(segmented);
  for (const auto& t : segmented) out.push_back({t, {}});
  return out;
}

std::vector<FactoredPair> Pipeline::prepare(const ParallelCorpus& corpus) const {
  std::vector<FactoredPair> out;
  out.reserve(corpus.size());
  for (const auto& p : corpus.pairs) out.push_back({prepare(p.source, Side::Source), prepare(p.target, Side::Target)});
  return out;
}

std::vector<FactorStream> Pipeline::streams(Side side) const {
  const bool factored = side == Side::Source ? factors_.source : factors_.target;
  if (!factored) return {};
  return {factors_.attribute == "gender" ? gender_stream() : case_stream()};
}

ModelConfig Pipeline::model_config(const ModelSetup& setup, const Vocab& vocab) const {
  ModelConfig c;
  c.vocab_size = vocab.size();
  c.embed_dim = setup.embed_dim;
  c.ff_dim = setup.ff_dim;
  c.heads = setup.heads;
  c.enc_layers = setup.enc_layers;
  c.dec_layers = setup.dec_layers;
  c.max_len = setup.max_len;
  c.tie_embeddings = setup.tie_embeddings;
  c.source_factors = factors_.source;
  c.target_factors = factors_.target;
  if (factors_.source || factors_.target) {
    const FactorStream s = factors_.attribute == "gender" ? gender_stream() : case_stream();
    c.factor_streams.push_back({s.name, static_cast<int>(s.labels.size())});
  }
  c.validate();
  return c;
}

void Pipeline::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  nlohmann::json j = {{"attribute", factors_.attribute},
                      {"source", factors_.source},
                      {"target", factors_.target},
                      {"subword",
                       {{"enabled", subword_.enabled},
                        {"num_merges", subword_.num_merges},
                        {"min_frequency", subword_.min_frequency},
                        {"case_safe", subword_.case_safe}}}};
  std::ofstream(dir / "pipeline.json") << j.dump(2) << '\n';
  truecaser_.save(dir / "truecase.tsv");
  bpe_.save_merges(dir / "bpe.merges");
  bpe_.save_vocab(dir / "bpe.vocab");
  lexicon_.save(dir / "lexicon.tsv");
}

Pipeline Pipeline::load(const std::filesystem::path& dir) {
  std::ifstream in(dir / "pipeline.json");
  if (!in) throw Error("cannot read " + (dir / "pipeline.json").string());
  const auto j = nlohmann::json::parse(in);
  FactorSetup f{j.at("attribute").get<std::string>(), j.at("source").get<bool>(), j.at("target").get<bool>()};
  const auto& s = j.at("subword");
  SubwordSetup sw{s.at("enabled").get<bool>(), s.at("num_merges").get<std::size_t>(),
                  s.at("min_frequency").get<std::size_t>(), s.at("case_safe").get<bool>()};
  Pipeline p(f, sw);
  p.truecaser_ = TruecaseModel::load(dir / "truecase.tsv");
  p.bpe_ = SubwordModel::load(dir / "bpe.merges", dir / "bpe.vocab");
  p.lexicon_ = GenderLexicon::load(dir / "lexicon.tsv");
  return p;
}

Vocab build_vocab(const std::vector<FactoredPair>& pairs) {
  std::vector<Sentence> forms;
  forms.reserve(2 * pairs.size());
  for (const auto& p : pairs) {
    forms.push_back(forms_of(p.source));
    forms.push_back(forms_of(p.target));
  }
  return Vocab::build(forms);
}

// ---------------------------------------------------------------------------
// Analysis and runs

template <typename T>
std::optional<double> case_centroid_similarity(FactoredSeq2Seq<T>& model, const Vocab& vocab) {
  const auto& config = model.config();
  std::vector<int> lower, upper, cased;
  for (int id = ReservedSymbols::kCount; id < vocab.size(); ++id) {
    std::string body = vocab.symbol(id);
    if (body.size() > kContinuationMarker.size() && body.ends_with(kContinuationMarker))
      body.resize(body.size() - kContinuationMarker.size());
    CaseFactor f;
    try {
      f = case_class(body);
    } catch (const MixedCaseError&) {
      continue;
    }
    if (f == CaseFactor::Lowercased) lower.push_back(id);
    if (f == CaseFactor::Uppercased) upper.push_back(id);
    if (f != CaseFactor::Undefined) cased.push_back(id);
  }
  const auto& table = model.target_word_embedding();
  if (config.target_factors && !config.factor_streams.empty() && config.factor_streams[0].name == "case") {
    if (cased.empty()) return std::nullopt;
    const auto& factor = model.factor_embedding(true, 0);
    Eigen::RowVectorXd base = Eigen::RowVectorXd::Zero(table.cols());
    for (int id : cased) base += table.row(id).template cast<double>();
    base /= static_cast<double>(cased.size());
    const Eigen::RowVectorXd a =
        base + factor.row(static_cast<int>(CaseFactor::Lowercased) + 1).template cast<double>();
    const Eigen::RowVectorXd b =
        base + factor.row(static_cast<int>(CaseFactor::Uppercased) + 1).template cast<double>();
    const double na = a.norm(), nb = b.norm();
    if (na == 0.0 || nb == 0.0) return std::nullopt;
    return a.dot(b) / (na * nb);
  }
  if (lower.empty() || upper.empty()) return std::nullopt;
  return embedding_centroid_similarity(table, lower, upper);
}

template std::optional<double> case_centroid_similarity<float>(FactoredSeq2Seq<float>&, const Vocab&);
template std::optional<double> case_centroid_similarity<double>(FactoredSeq2Seq<double>&, const Vocab&);

TrainedSystem train_system(const ParallelCorpus& train_corpus, const ParallelCorpus& valid,
                           const ExperimentConfig& config, const GenderLexicon* lexicon) {
  Pipeline pipeline(config.factors, config.subword);
  pipeline.fit(train_corpus, lexicon);
  const auto prepared = pipeline.prepare(train_corpus);
  Vocab vocab = build_vocab(prepared);
  const ModelConfig mc = pipeline.model_config(config.model, vocab);

  std::vector<FactoredExample> train_set, valid_set;
  for (const auto& p : prepared) train_set.push_back(make_example(p, vocab, mc));
  for (const auto& p : pipeline.prepare(valid)) valid_set.push_back(make_example(p, vocab, mc));

  FactoredSeq2Seq<float> model(mc, config.seed);
  TrainOptions opts = config.train;
  opts.seed = config.seed;
  TrainResult training = train(model, train_set, valid_set, opts);
  return {std::move(pipeline), std::move(vocab), std::move(model), std::move(training)};
}

CaseRunResult run_case_experiment(const ParallelCorpus& train_corpus, const ParallelCorpus& valid,
                                  const ParallelCorpus& test, const ExperimentConfig& config) {
  auto sys = train_system(train_corpus, valid, config);
  const auto& pipeline = sys.pipeline;
  const auto& vocab = sys.vocab;
  auto& model = sys.model;
  const ModelConfig& mc = model.config();
  CaseRunResult result;
  result.training = sys.training;

  std::vector<Sentence> refs;
  for (const auto& p : test.pairs) {
    const FactoredSentence src = pipeline.prepare(p.source, Side::Source);
    const Hypothesis h = config.eval.beam_size <= 1
                             ? greedy_translate(model, vocab, src, config.eval.max_len)
                             : beam_translate(model, vocab, src, config.eval.beam_size, config.eval.max_len);
    result.outputs.push_back(surface_of(h.factored(vocab), mc));
    refs.push_back(p.target);
  }
  if (!result.outputs.empty()) {
    result.bleu_ci = bleu(result.outputs, refs, true).score;
    std::size_t tokens = 0;
    for (const auto& s : result.outputs) tokens += s.size();
    result.upper_ratio = tokens ? uppercased_token_ratio(result.outputs) : 0.0;
    result.upper_sentence_ratio = uppercased_sentence_ratio(result.outputs);
  }
  result.centroid_cos = case_centroid_similarity(model, vocab);
  return result;
}

std::vector<double> sweep_values(SweepGrid grid) {
  if (grid == SweepGrid::Upr) return upr_grid();
  std::vector<double> v{0.0};
  const auto g = augment_grid();
  v.insert(v.end(), g.begin(), g.end());
  return v;
}

std::vector<SweepRow> run_sweep(const ParallelCorpus& base, const ParallelCorpus& valid,
                                const ParallelCorpus& test, const ExperimentConfig& config, SweepGrid grid,
                                const std::vector<std::string>& setups, std::vector<double> values) {
  if (values.empty()) values = sweep_values(grid);
  ParallelCorpus test_set = test;
  if (config.data.uppercase_test_source)
    for (auto& p : test_set.pairs) p.source = uppercase(p.source);
  std::vector<SweepRow> rows;
  for (const auto& setup : setups) {
    for (double value : values) {
      ExperimentConfig cfg = config;
      cfg.factors = FactorSetup::from_name(setup, config.factors.attribute);
      ParallelCorpus train_set;
      if (grid == SweepGrid::Upr) {
        train_set = make_upr_corpus(base, {config.data.upper_source_fraction, value, config.seed});
      } else {
        train_set = augment_uppercase(base, {value, config.seed});
      }
      const CaseRunResult r = run_case_experiment(train_set, valid, test_set, cfg);
      rows.push_back({setup, value, r.bleu_ci, r.upper_ratio, r.centroid_cos});
    }
  }
  return rows;
}

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << "config,grid_value,bleu_ci,upper_ratio,centroid_cos\n";
  out << std::setprecision(9);
  for (const auto& r : rows) {
    out << r.config << ',' << r.grid_value << ',' << r.bleu_ci << ',' << r.upper_ratio << ',';
    if (r.centroid_cos) out << *r.centroid_cos;
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Toy corpora

namespace toy {

std::vector<std::string> lexicon_words(std::size_t count, std::uint64_t seed) {
  static constexpr std::string_view kConsonants = "bdfgklmnprstvz";
  static constexpr std::string_view kVowels = "aeiou";
  Rng rng(seed);
  std::set<std::string> seen;
  std::vector<std::string> out;
  while (out.size() < count) {
    const std::size_t syllables = 2 + uniform_index(rng, 2);
    std::string w;
    for (std::size_t s = 0; s < syllables; ++s) {
      w += kConsonants[uniform_index(rng, kConsonants.size())];
      w += kVowels[uniform_index(rng, kVowels.size())];
    }
    if (seen.insert(w).second) out.push_back(w);
  }
  return out;
}

ParallelCorpus copy_corpus(std::size_t pairs, std::size_t vocab_size, std::size_t min_len,
                           std::size_t max_len, std::uint64_t seed) {
  if (min_len < 1 || max_len < min_len) throw Error("invalid toy sentence length range");
  const auto words = lexicon_words(vocab_size, 0x5eed0000ull);
  Rng rng(seed);
  ParallelCorpus c;
  c.name = "copy";
  for (std::size_t i = 0; i < pairs; ++i) {
    const std::size_t len = min_len + uniform_index(rng, max_len - min_len + 1);
    Sentence s;
    for (std::size_t t = 0; t < len; ++t) s.push_back(words[uniform_index(rng, words.size())]);
    c.pairs.push_back({s, s});
  }
  return c;
}

GenderToy gender_corpus(const std::vector<GenderGroup>& groups, std::size_t professions_per_group,
                        std::size_t sentences_per_profession, std::size_t test_contexts, std::uint64_t seed) {
  constexpr std::size_t kFillers = 30;
  const auto pool = lexicon_words(kFillers * 2 + groups.size() * professions_per_group * 2, 0x6e6e6e6eull);
  std::vector<std::string> en_fill(pool.begin(), pool.begin() + kFillers);
  std::vector<std::string> fr_fill(pool.begin() + kFillers, pool.begin() + 2 * kFillers);
  std::size_t next = 2 * kFillers;

  Rng rng(seed);
  GenderToy toy;
  toy.train.name = "gender";
  std::map<std::string, GenderFactor> lexicon;

  auto context = [&](const std::string& en_prof, const std::string& fr_prof) {
    const std::size_t len = 2 + uniform_index(rng, 4);
    const std::size_t at = uniform_index(rng, len + 1);
    Sentence en, fr;
    for (std::size_t i = 0; i <= len; ++i) {
      if (i == at) {
        en.push_back(en_prof);
        fr.push_back(fr_prof);
      }
      if (i == len) break;
      const std::size_t w = uniform_index(rng, kFillers);
      en.push_back(en_fill[w]);
      fr.push_back(fr_fill[w]);
    }
    return std::pair{en, fr};
  };

  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& grp = groups[g];
    const std::size_t weight = grp.masculine_weight + grp.feminine_weight;
    if (weight == 0) throw Error("gender group without weight");
    toy.group_training_ratio.push_back(static_cast<double>(grp.masculine_weight) / static_cast<double>(weight));
    for (std::size_t p = 0; p < professions_per_group; ++p) {
      const std::string en = pool[next++];
      const std::string stem = pool[next++];
      const std::string masc = stem + "o";
      const std::string fem = stem + "a";
      lexicon[masc] = GenderFactor::Masculine;
      lexicon[fem] = GenderFactor::Feminine;
      const std::size_t n_masc =
          round_count(static_cast<double>(sentences_per_profession * grp.masculine_weight) / static_cast<double>(weight));
      std::vector<bool> is_masc(sentences_per_profession, false);
      for (std::size_t i : sample_without_replacement(rng, sentences_per_profession, n_masc)) is_masc[i] = true;
      for (std::size_t i = 0; i < sentences_per_profession; ++i) {
        auto [src, tgt] = context(en, is_masc[i] ? masc : fem);
        toy.train.pairs.push_back({std::move(src), std::move(tgt)});
      }
      for (std::size_t i = 0; i < test_contexts; ++i) {
        auto [src, tgt_m] = context(en, masc);
        Sentence tgt_f = tgt_m;
        std::replace(tgt_f.begin(), tgt_f.end(), masc, fem);
        ProfessionPair pair{detokenize(src), detokenize(tgt_m), detokenize(tgt_f), n_masc,
                            sentences_per_profession - n_masc};
        toy.pairs.push_back(std::move(pair));
        toy.pair_group.push_back(g);
      }
    }
  }
  // Interleave so minibatches mix professions.
  std::vector<SentencePair> shuffled;
  for (std::size_t i : sample_without_replacement(rng, toy.train.pairs.size(), toy.train.pairs.size()))
    shuffled.push_back(toy.train.pairs[i]);
  toy.train.pairs = std::move(shuffled);
  toy.lexicon = GenderLexicon(std::move(lexicon));
  return toy;
}

GenderRunResult run_gender_experiment(const GenderToy& data, const ExperimentConfig& config) {
  if (config.factors.attribute != "gender") throw Error("gender experiment needs gender factors");
  ParallelCorpus valid{"gender.valid", {}};
  const std::size_t n_valid = std::min<std::size_t>(20, data.train.pairs.size());
  valid.pairs.assign(data.train.pairs.begin(), data.train.pairs.begin() + static_cast<std::ptrdiff_t>(n_valid));
  auto sys = train_system(data.train, valid, config, &data.lexicon);
  const PhraseEncoder encode = [&](const std::string& phrase, Side side) {
    return sys.pipeline.prepare(tokenize(phrase), side);
  };
  GenderRunResult result;
  result.training = sys.training;
  result.choices = score_pairs(sys.model, sys.vocab, data.pairs, encode, config.eval.include_factors);
  std::vector<double> masc(data.group_training_ratio.size(), 0.0), total(masc.size(), 0.0);
  for (std::size_t i = 0; i < result.choices.size(); ++i) {
    const std::size_t g = data.pair_group[i];
    total[g] += 1.0;
    masc[g] += result.choices[i].choice == GenderFactor::Masculine ? 1.0 : 0.0;
  }
  for (std::size_t g = 0; g < masc.size(); ++g) result.group_masculine_fraction.push_back(total[g] > 0 ? masc[g] / total[g] : 0.0);
  return result;
}

}  // namespace toy

}  // namespace fnmt
