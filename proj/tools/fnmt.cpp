// Command-line front end. Every subcommand reads and writes the plain-text
// formats of the library; failures print one JSON line on stderr and exit 1.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <Eigen/Core>
#include <json.hpp>

#include "fnmt/datagen.hpp"
#include "fnmt/experiment.hpp"
#include "fnmt/infer.hpp"
#include "fnmt/metrics.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fnmt;

namespace {

constexpr const char* kThreadsEnv = "FNMT_THREADS";

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

ExperimentConfig load_config(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : ExperimentConfig::load(c.config);
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  return json::parse(in);
}

/// Provenance block attached to every sidecar and report line.
json stamp(const ExperimentConfig& cfg) { return {{"config_hash", cfg.hash()}, {"seed", cfg.seed}}; }

fs::path out_dir(const Common& c) {
  if (c.out.empty()) throw Error("--out is required");
  fs::create_directories(c.out);
  return c.out;
}

std::vector<Sentence> read_lines(const std::string& path) { return read_sentences(path); }

ParallelCorpus read_pair(const std::string& src, const std::string& tgt, const char* what) {
  if (src.empty() || tgt.empty()) throw Error(std::string("missing ") + what + " source/target paths");
  return read_parallel(src, tgt, what);
}

struct TrainedModel {
  ExperimentConfig config;
  Pipeline pipeline;
  Vocab vocab;
  FactoredSeq2Seq<float> model;
};

TrainedModel load_model(const fs::path& dir) {
  const ExperimentConfig cfg = ExperimentConfig::from_json(read_json(dir / "config.json"));
  return {cfg, Pipeline::load(dir / "pipeline"), Vocab::load(dir / "vocab.tsv"),
          FactoredSeq2Seq<float>::load(dir / "model.ckpt")};
}

// --- subcommands -----------------------------------------------------------

void cmd_tokenize(const std::string& input, const std::string& output) {
  std::ifstream in(input, std::ios::binary);
  if (!in) throw Error("cannot read " + input);
  std::vector<Sentence> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(tokenize(line));
  }
  write_sentences(output, out);
}

void cmd_truecase(const std::vector<std::string>& inputs, const std::string& model, bool learn,
                  const std::string& output) {
  if (learn) {
    std::vector<Sentence> all;
    for (const auto& f : inputs) {
      auto s = read_lines(f);
      all.insert(all.end(), s.begin(), s.end());
    }
    truecase_train(all).save(model);
    return;
  }
  if (inputs.size() != 1 || output.empty()) throw Error("truecase apply needs one --input and --output");
  const auto m = TruecaseModel::load(model);
  auto lines = read_lines(inputs[0]);
  for (auto& s : lines) s = truecase_apply(s, m);
  write_sentences(output, lines);
}

void cmd_factorize(const std::string& input, const std::string& output, const std::string& scheme,
                   const std::string& lexicon) {
  const auto lines = read_lines(input);
  std::vector<FactoredSentence> out;
  if (scheme == "case") {
    for (const auto& s : lines) out.push_back(factor_case(s));
    write_factored(output, out, {case_stream()});
  } else if (scheme == "gender") {
    const GenderLexicon lex = lexicon.empty() ? GenderLexicon{} : GenderLexicon::load(lexicon);
    for (const auto& s : lines) {
      // Broadcast each word's label over its BPE pieces.
      FactoredSentence f;
      Sentence word;
      for (const auto& tok : s) {
        word.push_back(tok);
        if (tok.ends_with(kContinuationMarker)) continue;
        const auto g = lex.lookup(bpe_restore(word)[0]);
        for (const auto& piece : word) f.push_back({piece, {static_cast<int>(g)}});
        word.clear();
      }
      if (!word.empty()) throw Error("dangling continuation marker in " + input);
      out.push_back(std::move(f));
    }
    write_factored(output, out, {gender_stream()});
  } else {
    throw Error("unknown scheme '" + scheme + "' (expected case|gender)");
  }
}

void cmd_bpe_train(const std::vector<std::string>& inputs, const std::string& merges, const std::string& vocab,
                   std::size_t num_merges, std::size_t min_frequency) {
  std::vector<Sentence> all;
  for (const auto& f : inputs) {
    auto s = read_lines(f);
    all.insert(all.end(), s.begin(), s.end());
  }
  const auto m = bpe_train(all, {num_merges, min_frequency});
  m.save_merges(merges);
  if (!vocab.empty()) m.save_vocab(vocab);
}

void cmd_bpe_apply(const std::string& merges, const std::string& input, const std::string& output, bool case_safe) {
  const auto m = SubwordModel::load(merges);
  auto lines = read_lines(input);
  for (auto& s : lines) s = bpe_apply(s, m, case_safe);
  write_sentences(output, lines);
}

void cmd_make_upr(const Common& c, const std::string& src, const std::string& tgt, double fraction, double rate) {
  const auto cfg = load_config(c);
  const auto dir = out_dir(c);
  UprRecord rec;
  const auto out = make_upr_corpus(read_pair(src, tgt, "input"), {fraction, rate, cfg.seed}, &rec);
  write_parallel(out, dir / "train.src", dir / "train.tgt");
  json j = rec.to_json();
  j["provenance"] = stamp(cfg);
  write_json(dir / "make-upr.json", j);
  for (const auto& w : rec.warnings) std::cerr << json{{"warning", w}}.dump() << '\n';
}

void cmd_augment(const Common& c, const std::string& src, const std::string& tgt, double fraction) {
  const auto cfg = load_config(c);
  const auto dir = out_dir(c);
  AugmentRecord rec;
  const auto out = augment_uppercase(read_pair(src, tgt, "input"), {fraction, cfg.seed}, &rec);
  write_parallel(out, dir / "train.src", dir / "train.tgt");
  json j = rec.to_json();
  j["provenance"] = stamp(cfg);
  write_json(dir / "augment.json", j);
}

void cmd_train(const Common& c) {
  const auto cfg = load_config(c);
  const auto dir = out_dir(c);
  const auto train_corpus = read_pair(cfg.data.train_source, cfg.data.train_target, "train");
  std::optional<GenderLexicon> lexicon;
  if (!cfg.data.lexicon.empty()) lexicon = GenderLexicon::load(cfg.data.lexicon);
  if (cfg.factors.attribute == "gender" && !lexicon) throw Error("gender factors need data.lexicon");

  Pipeline pipeline(cfg.factors, cfg.subword);
  pipeline.fit(train_corpus, lexicon ? &*lexicon : nullptr);
  const auto prepared = pipeline.prepare(train_corpus);
  const Vocab vocab = build_vocab(prepared);
  const ModelConfig mc = pipeline.model_config(cfg.model, vocab);

  std::vector<FactoredExample> train_set, valid_set;
  std::size_t truncated = 0, unknown = 0;
  for (const auto& p : prepared) train_set.push_back(make_example(p, vocab, mc, &truncated));
  if (!cfg.data.valid_source.empty()) {
    const auto valid = read_pair(cfg.data.valid_source, cfg.data.valid_target, "valid");
    for (const auto& p : pipeline.prepare(valid)) valid_set.push_back(make_example(p, vocab, mc, &truncated, &unknown));
  }

  FactoredSeq2Seq<float> model(mc, cfg.seed);
  TrainOptions opts = cfg.train;
  opts.seed = cfg.seed;
  const TrainResult r = train(model, train_set, valid_set, opts);

  pipeline.save(dir / "pipeline");
  vocab.save(dir / "vocab.tsv");
  model.save(dir / "model.ckpt");
  write_json(dir / "config.json", cfg.to_json());
  write_curve_csv(dir / "curve.csv", r.curve);
  write_json(dir / "train.json", {{"provenance", stamp(cfg)},
                                  {"model", mc.to_json()},
                                  {"parameters", model.parameter_count()},
                                  {"steps", r.steps},
                                  {"final_loss", r.final_loss},
                                  {"reached_target", r.reached_target},
                                  {"truncated_sentences", truncated},
                                  {"unknown_valid_tokens", unknown}});
}

void cmd_translate(const Common& c, const std::string& model_dir, const std::string& input, const std::string& output,
                   std::optional<int> beam, std::optional<int> max_len, bool uppercase_source) {
  auto m = load_model(model_dir);
  if (c.seed) m.config.seed = *c.seed;
  const int width = beam.value_or(m.config.eval.beam_size);
  const int limit = max_len.value_or(m.config.eval.max_len);
  std::vector<Sentence> out;
  std::size_t truncated = 0;
  for (auto s : read_lines(input)) {
    if (uppercase_source) s = uppercase(s);
    const auto src = m.pipeline.prepare(s, Side::Source);
    const Hypothesis h = width <= 1 ? greedy_translate(m.model, m.vocab, src, limit)
                                    : beam_translate(m.model, m.vocab, src, width, limit);
    truncated += h.truncated;
    out.push_back(surface_of(h.factored(m.vocab), m.model.config()));
  }
  write_sentences(output, out);
  write_json(output + ".json", {{"provenance", stamp(m.config)},
                                {"beam_size", width},
                                {"max_len", limit},
                                {"sentences", out.size()},
                                {"truncated", truncated}});
}

void cmd_score_pairs(const Common& c, const std::string& model_dir, const std::string& pairs_path,
                     const std::string& train_target, std::optional<std::size_t> min_count, bool word_only,
                     const std::string& output) {
  auto m = load_model(model_dir);
  if (c.seed) m.config.seed = *c.seed;
  auto pairs = read_profession_pairs(pairs_path);
  if (!train_target.empty())
    pairs = count_and_filter(std::move(pairs), read_lines(train_target), min_count.value_or(m.config.eval.min_pair_count));
  const PhraseEncoder encode = [&](const std::string& phrase, Side side) {
    return m.pipeline.prepare(tokenize(phrase), side);
  };
  const auto choices = score_pairs(m.model, m.vocab, pairs, encode, !word_only);
  write_pair_scores(output, pairs, choices);
  std::size_t masc = 0;
  for (const auto& ch : choices) masc += ch.choice == GenderFactor::Masculine;
  write_json(output + ".json", {{"provenance", stamp(m.config)},
                                {"pairs", pairs.size()},
                                {"masculine_choices", masc},
                                {"include_factors", !word_only}});
}

struct EvalArgs {
  std::string metric, hyp, ref, src, tgt, scores, report;
  bool case_sensitive = false;
  std::size_t bins = 15;
};

std::vector<BinInput> read_bin_inputs(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path);
  std::string line;
  std::getline(in, line);
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, '\t');) header.push_back(f);
  }
  const auto col = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw Error(path + ": missing column " + name);
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t ratio = col("training_masculine_ratio"), choice = col("choice");
  std::vector<BinInput> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string x; std::getline(ss, x, '\t');) f.push_back(x);
    if (f.size() < header.size()) throw Error(path + ": short row");
    if (f[ratio].empty()) continue;
    out.push_back({std::stod(f[ratio]), f[choice] == "masculine"});
  }
  return out;
}

void cmd_eval(const Common& c, const EvalArgs& a) {
  const auto cfg = load_config(c);
  json details = stamp(cfg);
  double value = 0.0;
  auto need = [](const std::string& v, const char* flag) {
    if (v.empty()) throw Error(std::string("metric needs ") + flag);
  };
  if (a.metric == "bleu") {
    need(a.hyp, "--hyp");
    need(a.ref, "--ref");
    const auto b = bleu(read_lines(a.hyp), read_lines(a.ref), !a.case_sensitive);
    value = b.score;
    details["bleu"] = b.to_json();
    details["case_insensitive"] = !a.case_sensitive;
  } else if (a.metric == "upr") {
    need(a.src, "--src");
    need(a.tgt, "--tgt");
    const auto corpus = read_pair(a.src, a.tgt, "eval");
    const auto counts = upr_counts(corpus);
    details["upper_source"] = counts.upper_source;
    details["upper_both"] = counts.upper_both;
    const auto u = upr(corpus);
    if (!u) {
      std::cout << json{{"metric", "upr"}, {"value", nullptr}, {"details", details}}.dump() << '\n';
      if (!a.report.empty()) append_report(a.report, {{"metric", "upr"}, {"value", nullptr}, {"details", details}});
      return;
    }
    value = *u;
  } else if (a.metric == "upper-ratio") {
    need(a.hyp, "--hyp");
    value = uppercased_token_ratio(read_lines(a.hyp));
  } else if (a.metric == "upper-sentence-ratio") {
    need(a.hyp, "--hyp");
    value = uppercased_sentence_ratio(read_lines(a.hyp));
  } else if (a.metric == "cap-ratio") {
    need(a.hyp, "--hyp");
    value = capitalized_token_ratio(read_lines(a.hyp));
  } else if (a.metric == "bins") {
    need(a.scores, "--scores");
    const auto report = bin_analysis(read_bin_inputs(a.scores), a.bins);
    value = report.mse;
    details["bins"] = report.to_json();
  } else {
    throw Error("unknown metric '" + a.metric + "'");
  }
  const json line = metric_line(a.metric, value, details);
  std::cout << line.dump() << '\n';
  if (!a.report.empty()) append_report(a.report, line);
}

void cmd_sweep(const Common& c, const std::string& grid_name, const std::vector<std::string>& setups,
               const std::vector<double>& values) {
  const auto cfg = load_config(c);
  const auto dir = out_dir(c);
  SweepGrid grid;
  if (grid_name == "upr") grid = SweepGrid::Upr;
  else if (grid_name == "augment") grid = SweepGrid::Augment;
  else throw Error("unknown grid '" + grid_name + "' (expected upr|augment)");
  const auto base = read_pair(cfg.data.train_source, cfg.data.train_target, "train");
  const auto valid = cfg.data.valid_source.empty() ? ParallelCorpus{}
                                                   : read_pair(cfg.data.valid_source, cfg.data.valid_target, "valid");
  const auto test = read_pair(cfg.data.test_source, cfg.data.test_target, "test");
  const auto rows = run_sweep(base, valid, test, cfg, grid, setups, values);
  write_sweep_csv(dir / "sweep.csv", rows);
  write_json(dir / "sweep.json", {{"provenance", stamp(cfg)},
                                  {"grid", grid_name},
                                  {"rows", rows.size()},
                                  {"config", cfg.to_json()}});
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* env = std::getenv(kThreadsEnv)) Eigen::setNbThreads(std::max(1, std::atoi(env)));

  CLI::App app{"Factored translation toolkit: preprocessing, training, decoding and faithfulness metrics."};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "Experiment config JSON");
    sub->add_option("--seed", common.seed, "Override the config seed");
    sub->add_option("--out", common.out, "Output directory");
  };

  std::string input, output, model, scheme = "case", lexicon, merges, vocab, src, tgt, grid, pairs, train_target;
  std::vector<std::string> inputs, setups{"none", "source", "target", "both"};
  std::vector<double> values;
  bool learn = false, no_case_safe = false, word_only = false, upper_src = false;
  std::size_t num_merges = 500, min_frequency = 2;
  std::optional<std::size_t> min_count;
  double fraction = 0.02, rate = 0.0;
  std::optional<int> beam, max_len;
  EvalArgs ev;

  auto* tok = app.add_subcommand("tokenize", "Tokenize raw text, one sentence per line");
  tok->add_option("--input", input)->required();
  tok->add_option("--output", output)->required();

  auto* tc = app.add_subcommand("truecase", "Learn (--learn) or apply a truecasing model");
  tc->add_option("--input", inputs)->required();
  tc->add_option("--model", model)->required();
  tc->add_option("--output", output);
  tc->add_flag("--learn", learn);

  auto* fac = app.add_subcommand("factorize", "Write form|FACTOR tokens for the case or gender scheme");
  fac->add_option("--input", input)->required();
  fac->add_option("--output", output)->required();
  fac->add_option("--scheme", scheme)->check(CLI::IsMember({"case", "gender"}));
  fac->add_option("--lexicon", lexicon);

  auto* bt = app.add_subcommand("bpe-train", "Learn BPE merges");
  bt->add_option("--input", inputs)->required();
  bt->add_option("--merges", merges)->required();
  bt->add_option("--vocab", vocab);
  bt->add_option("--num-merges", num_merges);
  bt->add_option("--min-frequency", min_frequency);

  auto* ba = app.add_subcommand("bpe-apply", "Segment text with a merge table");
  ba->add_option("--merges", merges)->required();
  ba->add_option("--input", input)->required();
  ba->add_option("--output", output)->required();
  ba->add_flag("--no-case-safe", no_case_safe);

  auto* mu = app.add_subcommand("make-upr", "Build a controlled uppercasing-preservation corpus");
  add_common(mu);
  mu->add_option("--src", src)->required();
  mu->add_option("--tgt", tgt)->required();
  mu->add_option("--fraction", fraction, "Share of pairs with an uppercased source");
  mu->add_option("--upr", rate, "Share of those with an uppercased target")->required();

  auto* au = app.add_subcommand("augment", "Append uppercased copies of sampled pairs");
  add_common(au);
  au->add_option("--src", src)->required();
  au->add_option("--tgt", tgt)->required();
  au->add_option("--fraction", fraction)->required();

  auto* tr = app.add_subcommand("train", "Train a model from the config's data section");
  add_common(tr);

  auto* tl = app.add_subcommand("translate", "Decode a file with a trained model");
  add_common(tl);
  tl->add_option("--model", model, "Directory written by train")->required();
  tl->add_option("--input", input)->required();
  tl->add_option("--output", output)->required();
  tl->add_option("--beam", beam);
  tl->add_option("--max-len", max_len);
  tl->add_flag("--uppercase-source", upper_src);

  auto* sp = app.add_subcommand("score-pairs", "Forced-decoding choice between gendered translations");
  add_common(sp);
  sp->add_option("--model", model)->required();
  sp->add_option("--pairs", pairs, "TSV english<TAB>masculine<TAB>feminine")->required();
  sp->add_option("--train-target", train_target, "Target side used for phrase counts");
  sp->add_option("--min-count", min_count);
  sp->add_flag("--word-only", word_only, "Score the word stream only");
  sp->add_option("--output", output)->required();

  auto* ev_cmd = app.add_subcommand("eval", "Compute one metric and print a JSON report line");
  add_common(ev_cmd);
  ev_cmd->add_option("--metric", ev.metric)
      ->required()
      ->check(CLI::IsMember({"bleu", "upr", "upper-ratio", "upper-sentence-ratio", "cap-ratio", "bins"}));
  ev_cmd->add_option("--hyp", ev.hyp);
  ev_cmd->add_option("--ref", ev.ref);
  ev_cmd->add_option("--src", ev.src);
  ev_cmd->add_option("--tgt", ev.tgt);
  ev_cmd->add_option("--scores", ev.scores, "Output of score-pairs");
  ev_cmd->add_option("--bins", ev.bins);
  ev_cmd->add_option("--report", ev.report, "Append the line to this JSONL file");
  ev_cmd->add_flag("--case-sensitive", ev.case_sensitive);

  auto* sw = app.add_subcommand("sweep", "Run every factor setup over a grid and write sweep.csv");
  add_common(sw);
  sw->add_option("--grid", grid)->required()->check(CLI::IsMember({"upr", "augment"}));
  sw->add_option("--setups", setups)->delimiter(',');
  sw->add_option("--values", values)->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << json{{"error", e.what()}, {"kind", "usage"}}.dump() << '\n';
    return 2;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    if (name == "tokenize") cmd_tokenize(input, output);
    else if (name == "truecase") cmd_truecase(inputs, model, learn, output);
    else if (name == "factorize") cmd_factorize(input, output, scheme, lexicon);
    else if (name == "bpe-train") cmd_bpe_train(inputs, merges, vocab, num_merges, min_frequency);
    else if (name == "bpe-apply") cmd_bpe_apply(merges, input, output, !no_case_safe);
    else if (name == "make-upr") cmd_make_upr(common, src, tgt, fraction, rate);
    else if (name == "augment") cmd_augment(common, src, tgt, fraction);
    else if (name == "train") cmd_train(common);
    else if (name == "translate") cmd_translate(common, model, input, output, beam, max_len, upper_src);
    else if (name == "score-pairs") cmd_score_pairs(common, model, pairs, train_target, min_count, word_only, output);
    else if (name == "eval") cmd_eval(common, ev);
    else if (name == "sweep") cmd_sweep(common, grid, setups, values);
  } catch (const std::exception& e) {
    std::cerr << json{{"error", e.what()}, {"command", name}}.dump() << '\n';
    return 1;
  }
  return 0;
}
