#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "otf_rnnlm.hpp"

namespace fs = std::filesystem;
using namespace otf;

namespace {

/// Bad invocation or missing input path; maps to exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

constexpr const char* kSweepLedgerFile = "sweep_ledger.tsv";
constexpr const char* kComparisonLedgerFile = "comparison_ledger.tsv";
constexpr const char* kSweepReportFile = "cache_sweep.tsv";
constexpr const char* kTransferReportFile = "transfer.tsv";
constexpr const char* kComparisonReportFile = "comparison.tsv";
constexpr const char* kConfigPrefix = "# config: ";

struct Paths {
  std::string vocab, rnnlm, small_lm, compare_lm, lattice_dir, references;
};

Paths resolve_paths(const RunConfig& c) {
  const fs::path out(c.output_dir);
  auto pick = [&](const std::string& set, const char* name) { return set.empty() ? (out / name).string() : set; };
  return {pick(c.vocab, "vocab.txt"),       pick(c.rnnlm_model, "rnnlm.bin"),
          pick(c.small_lm, "small.arpa"),   pick(c.compare_lm, "compare.arpa"),
          pick(c.lattice_dir, "lattices"),  pick(c.references, "references.txt")};
}

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw UsageError(std::string(what) + " path not set");
  if (!fs::is_regular_file(path)) throw UsageError(std::string(what) + " not found: " + path);
}

std::ifstream open_in(const std::string& path, const char* what, std::ios::openmode mode = std::ios::in) {
  require_file(path, what);
  std::ifstream in(path, mode);
  if (!in) throw IoError("cannot open " + path);
  return in;
}

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  return out;
}

void finish(std::ofstream& out, const std::string& path) {
  out.close();
  if (!out) throw IoError("error while writing " + path);
}

Vocabulary load_or_build_vocab(const RunConfig& c, const Paths& p) {
  if (fs::is_regular_file(p.vocab)) {
    auto in = open_in(p.vocab, "vocabulary");
    return Vocabulary::read(in);
  }
  auto in = open_in(c.corpus, "corpus");
  Vocabulary v = build_vocabulary(in, c.min_count);
  auto out = open_out(p.vocab);
  v.write(out);
  finish(out, p.vocab);
  return v;
}

Vocabulary load_vocab(const Paths& p) {
  auto in = open_in(p.vocab, "vocabulary");
  return Vocabulary::read(in);
}

Corpus load_corpus(const std::string& path, const Vocabulary& v, const char* what) {
  auto in = open_in(path, what);
  return v.tokenize_corpus(in);
}

NgramModel load_arpa(const std::string& path, const Vocabulary& v, const char* what) {
  auto in = open_in(path, what);
  return NgramModel::read_arpa(in, v);
}

RnnlmModel load_rnnlm(const std::string& path) {
  auto in = open_in(path, "rnnlm model", std::ios::binary);
  return read_model(in);
}

struct Models {
  Vocabulary vocab;
  HuffmanTree tree;
  RnnlmModel rnnlm;
  NgramModel small_lm, compare_lm;

  BenchModels view() const { return {&vocab, &rnnlm, &tree, &small_lm, &compare_lm}; }
};

Models load_models(const Paths& p) {
  Models m;
  m.vocab = load_vocab(p);
  m.tree = build_huffman(m.vocab);
  m.rnnlm = load_rnnlm(p.rnnlm);
  if (m.rnnlm.vocab_size() != m.vocab.size())
    throw Error("rnnlm model has " + std::to_string(m.rnnlm.vocab_size()) + " words, vocabulary has " +
                std::to_string(m.vocab.size()));
  m.small_lm = load_arpa(p.small_lm, m.vocab, "small LM");
  m.compare_lm = load_arpa(p.compare_lm, m.vocab, "comparison LM");
  return m;
}

Lattice load_lattice(const std::string& path, const Vocabulary& v) {
  auto in = open_in(path, "lattice");
  try {
    return read_lattice(in, v);
  } catch (const FormatError& e) {
    throw FormatError(0, path + ": " + e.what());
  }
}

CommandCorpusOptions command_options(const RunConfig& c) {
  CommandCorpusOptions o;
  o.vocab_words = c.command_vocab;
  o.templates = c.num_templates;
  o.zipf_exponent = c.zipf_exponent;
  o.seed = c.seed;
  return o;
}

std::size_t valid_sentences(const RunConfig& c) {
  return c.valid_corpus.empty() ? 0 : std::max<std::size_t>(1, c.train_sentences / 10);
}

LatticeGenOptions lattice_options(const RunConfig& c) {
  LatticeGenOptions o;
  o.confusion_breadth = c.confusion_breadth;
  o.time_variants = c.time_variants;
  o.acoustic_mean = c.acoustic_mean;
  o.acoustic_sigma = c.acoustic_sigma;
  o.seed = c.seed * 1000003;
  return o;
}

void write_lines(CommandGenerator& gen, std::size_t count, const std::string& path) {
  auto out = open_out(path);
  for (std::size_t i = 0; i < count; ++i) out << gen.sample_line() << '\n';
  finish(out, path);
}

std::map<std::string, Sentence> load_references(const std::string& path, const Vocabulary& v) {
  auto in = open_in(path, "references");
  std::map<std::string, Sentence> refs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw FormatError(lineno, path + ": expected 'id<TAB>words'");
    refs[line.substr(0, tab)] = v.tokenize(std::string_view(line).substr(tab + 1));
  }
  return refs;
}

std::vector<Utterance> load_utterances(const Paths& p, const Vocabulary& v) {
  std::vector<Utterance> utts;
  for (auto& [id, ref] : load_references(p.references, v))
    utts.push_back({id, ref, load_lattice((fs::path(p.lattice_dir) / (id + ".lat")).string(), v)});
  return utts;
}

std::string config_line(const RunConfig& c) { return kConfigPrefix + c.echo(); }

// Splits a ledger file into its config echo and the ledger body.
std::pair<std::string, std::string> read_ledger_file(const std::string& path) {
  auto in = open_in(path, "ledger");
  std::string first;
  std::getline(in, first);
  if (first.rfind(kConfigPrefix, 0) != 0) throw FormatError(1, path + ": missing config line");
  std::ostringstream rest;
  rest << in.rdbuf();
  return {first, rest.str()};
}

void write_reports(const std::string& output_dir) {
  const fs::path dir(output_dir);
  const auto [sweep_cfg, sweep_body] = read_ledger_file((dir / kSweepLedgerFile).string());
  const auto [cmp_cfg, cmp_body] = read_ledger_file((dir / kComparisonLedgerFile).string());
  std::istringstream sweep_in(sweep_body), cmp_in(cmp_body);
  const auto sweep = read_sweep_ledger(sweep_in);
  const auto cmp = read_comparison_ledger(cmp_in);

  auto emit = [&](const char* name, const std::string& cfg, auto&& body) {
    const std::string path = (dir / name).string();
    auto out = open_out(path);
    out << cfg << '\n';
    body(out);
    finish(out, path);
  };
  emit(kSweepReportFile, sweep_cfg, [&](std::ostream& o) { write_sweep_report(o, summarize_sweep(sweep)); });
  emit(kTransferReportFile, sweep_cfg, [&](std::ostream& o) { write_transfer_report(o, summarize_transfer(sweep)); });
  emit(kComparisonReportFile, cmp_cfg, [&](std::ostream& o) { write_comparison_report(o, summarize_comparison(cmp)); });
}

int cmd_train_ngram(const RunConfig& c) {
  const Paths p = resolve_paths(c);
  require_file(c.corpus, "corpus");
  const Vocabulary vocab = load_or_build_vocab(c, p);
  const Corpus corpus = load_corpus(c.corpus, vocab, "corpus");
  auto build = [&](std::uint64_t order, const std::string& path) {
    const NgramModel lm = train_ngram(corpus, vocab, {static_cast<int>(order), c.smoothing, c.discount});
    auto out = open_out(path);
    lm.write_arpa(out, vocab);
    finish(out, path);
    return lm;
  };
  const NgramModel small = build(c.small_lm_order, p.small_lm);
  const NgramModel compare = build(c.ngram_order, p.compare_lm);
  std::cout << config_line(c) << '\n' << "model\torder\tpath\ttrain_ppl";
  if (!c.valid_corpus.empty()) std::cout << "\tvalid_ppl";
  std::cout << '\n';
  const Corpus valid = c.valid_corpus.empty() ? Corpus{} : load_corpus(c.valid_corpus, vocab, "validation corpus");
  auto row = [&](const char* name, const NgramModel& lm, const std::string& path) {
    std::cout << name << '\t' << lm.order() << '\t' << path << '\t' << perplexity(lm, corpus, vocab);
    if (!c.valid_corpus.empty()) std::cout << '\t' << perplexity(lm, valid, vocab);
    std::cout << '\n';
  };
  row("small", small, p.small_lm);
  row("compare", compare, p.compare_lm);
  return 0;
}

int cmd_train_rnnlm(const RunConfig& c) {
  const Paths p = resolve_paths(c);
  require_file(c.corpus, "corpus");
  if (!c.valid_corpus.empty()) require_file(c.valid_corpus, "validation corpus");
  const Vocabulary vocab = load_or_build_vocab(c, p);
  const Corpus corpus = load_corpus(c.corpus, vocab, "corpus");
  const Corpus valid = c.valid_corpus.empty() ? Corpus{} : load_corpus(c.valid_corpus, vocab, "validation corpus");
  const HuffmanTree tree = build_huffman(vocab);
  RnnlmShape shape;
  shape.hidden_size = c.hidden_size;
  shape.vocab_size = vocab.size();
  shape.maxent_order = c.maxent_order;
  shape.maxent_table_bits = static_cast<unsigned>(c.maxent_table_bits);
  RnnlmModel m = RnnlmModel::random(shape, c.seed, c.init_scale);
  const auto log = train(m, tree, corpus, valid.empty() ? nullptr : &valid, vocab.sentence_end_id(),
                         {static_cast<int>(c.epochs), c.learn_rate, c.bptt_steps});
  std::cout << config_line(c) << '\n' << "epoch\ttrain_ppl\tvalid_ppl\n";
  for (const auto& e : log)
    std::cout << e.epoch << '\t' << detail::format_double(e.train_perplexity) << '\t'
              << (std::isnan(e.valid_perplexity) ? std::string("-") : detail::format_double(e.valid_perplexity))
              << '\n';
  auto out = open_out(p.rnnlm, std::ios::binary);
  write_model(out, m);
  finish(out, p.rnnlm);
  return 0;
}

int cmd_gen_lattices(const RunConfig& c, const std::string& mode) {
  const Paths p = resolve_paths(c);
  CommandGenerator gen(command_options(c));
  if (mode == "corpus") {
    if (c.corpus.empty()) throw UsageError("corpus path not set");
    write_lines(gen, c.train_sentences, c.corpus);
    if (!c.valid_corpus.empty()) write_lines(gen, valid_sentences(c), c.valid_corpus);
    return 0;
  }
  // held-out commands follow the training and validation draws
  for (std::size_t i = 0; i < c.train_sentences + valid_sentences(c); ++i) gen.sample();
  const Vocabulary vocab = load_vocab(p);
  const NgramModel small = load_arpa(p.small_lm, vocab, "small LM");
  const auto utts = make_utterances(gen, vocab, small, c.num_utterances, lattice_options(c));
  auto refs = open_out(p.references);
  for (const auto& u : utts) {
    const std::string path = (fs::path(p.lattice_dir) / (u.id + ".lat")).string();
    auto out = open_out(path);
    write_lattice(out, u.lattice, vocab);
    finish(out, path);
    refs << u.id << '\t';
    for (std::size_t i = 0; i < u.reference.size(); ++i) refs << (i ? " " : "") << vocab.word(u.reference[i]);
    refs << '\n';
  }
  finish(refs, p.references);
  return 0;
}

int cmd_decode(const RunConfig& c, const std::string& mode, bool cache_on, std::vector<std::string> files) {
  const Paths p = resolve_paths(c);
  const Models m = load_models(p);
  if (files.empty()) {
    if (!fs::is_directory(p.lattice_dir)) throw UsageError("lattice directory not found: " + p.lattice_dir);
    for (const auto& e : fs::directory_iterator(p.lattice_dir))
      if (e.path().extension() == ".lat") files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
  }
  if (files.empty()) throw EmptyInputError("no lattices to decode");

  RescoreServer server(m.rnnlm, m.tree, m.small_lm, m.vocab.sentence_begin_id(), static_cast<unsigned>(c.rnn_bits));
  server.cache().set_capacity(c.cache_capacity_kb.front() * 1000);
  server.cache().set_enabled(cache_on);
  const DecodeOptions opt{c.lm_weight, c.beam};
  TransferLedger transfer(context_bytes(m.rnnlm.hidden_size(), m.rnnlm.maxent_order()));
  CacheStats cache;
  std::uint64_t compute_calls = 0;

  std::cout << config_line(c) << " mode=" << mode << " cache=" << (cache_on ? "on" : "off") << '\n'
            << "utterance\twords\tscore\n";
  for (const auto& file : files) {
    const Lattice lat = load_lattice(file, m.vocab);
    PathHypothesis best;
    if (mode == "onthefly") {
      const auto r = rescore_onthefly(lat, server, opt);
      server.reset_utterance(c.retain_across_utterances);
      best = r.best;
      transfer.requests += r.transfer.requests;
      transfer.bytes_indexed += r.transfer.bytes_indexed;
      transfer.bytes_full_baseline += r.transfer.bytes_full_baseline;
      cache.lookups += r.cache.lookups;
      cache.hits += r.cache.hits;
      cache.misses += r.cache.misses;
      cache.evictions += r.cache.evictions;
      cache.entries = r.cache.entries;
      cache.resident_bytes = r.cache.resident_bytes;
      compute_calls += r.compute_calls;
    } else if (mode == "ngram") {
      best = nbest(lat, 1, c.lm_weight).front();
    } else {
      const auto hyps = nbest(lat, c.nbest_n, c.lm_weight);
      best = rescore_twopass(hyps, mode == "twopass-rnnlm" ? TwoPassMode::rnnlm : TwoPassMode::hybrid, m.rnnlm,
                             m.tree, m.compare_lm, m.vocab.sentence_begin_id(), c.interp_weight, c.lm_weight);
      for (const auto& h : hyps) compute_calls += h.words.size();
    }
    std::cout << fs::path(file).stem().string() << '\t';
    const auto words = strip_sentence_end(best.words, m.vocab.sentence_end_id());
    for (std::size_t i = 0; i < words.size(); ++i) std::cout << (i ? " " : "") << m.vocab.word(words[i]);
    std::cout << '\t' << detail::format_double(best.combined) << '\n';
  }
  std::cout << "# utterances=" << files.size() << " rnnlm_calls=" << compute_calls << '\n';
  if (mode == "onthefly") {
    std::cout << "# requests=" << transfer.requests << " bytes_indexed=" << transfer.bytes_indexed
              << " bytes_baseline=" << transfer.bytes_full_baseline << '\n'
              << "# " << cache.to_line() << '\n';
  }
  return 0;
}

int cmd_bench(const RunConfig& c) {
  const Paths p = resolve_paths(c);
  const Models m = load_models(p);
  const auto utts = load_utterances(p, m.vocab);
  const DecodeOptions opt{c.lm_weight, c.beam};
  const auto sweep = run_capacity_sweep(m.view(), utts, c.cache_capacity_kb, opt, static_cast<unsigned>(c.rnn_bits));
  const auto cmp = run_comparison(m.view(), utts, {opt, c.nbest_n, c.interp_weight});
  const fs::path dir(c.output_dir);
  auto dump = [&](const char* name, auto&& body) {
    const std::string path = (dir / name).string();
    auto out = open_out(path);
    out << config_line(c) << '\n';
    body(out);
    finish(out, path);
  };
  dump(kSweepLedgerFile, [&](std::ostream& o) { write_sweep_ledger(o, sweep); });
  dump(kComparisonLedgerFile, [&](std::ostream& o) { write_comparison_ledger(o, cmp); });
  write_reports(c.output_dir);
  return 0;
}

RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  RunConfig c;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw UsageError("config not found: " + path);
    c = parse_config(in);
  }
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    c.set(detail::trim(kv.substr(0, eq)), detail::trim(kv.substr(eq + 1)));
  }
  c.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"On-the-fly RNNLM lattice rescoring"};
  app.require_subcommand(1);
  app.allow_windows_style_options(false);
  std::string config_path;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "key = value config file");
  app.add_option("--set", overrides, "override one config key, key=value")->take_all();

  auto* train_rnnlm = app.add_subcommand("train-rnnlm", "train the RNNLM, log per-epoch perplexity");
  auto* train_ng = app.add_subcommand("train-ngram", "train the lattice and comparison n-gram models");
  auto* gen = app.add_subcommand("gen-lattices", "write synthetic lattices, or the synthetic corpus");
  std::string gen_mode = "lattices";
  gen->add_option("--mode", gen_mode, "lattices or corpus")->check(CLI::IsMember({"lattices", "corpus"}));
  auto* decode = app.add_subcommand("decode", "decode lattice files");
  std::string decode_mode = "onthefly";
  std::string cache_flag = "on";
  std::int64_t beam = -1;
  std::vector<std::string> files;
  decode->add_option("--mode", decode_mode, "onthefly, twopass-rnnlm, twopass-hybrid or ngram")
      ->check(CLI::IsMember({"onthefly", "twopass-rnnlm", "twopass-hybrid", "ngram"}));
  decode->add_option("--beam", beam, "tokens kept per lattice node");
  decode->add_option("--cache", cache_flag, "on or off")->check(CLI::IsMember({"on", "off"}));
  decode->add_option("lattices", files, "lattice files; default every .lat in lattice_dir");
  auto* bench = app.add_subcommand("bench", "cache sweep, transfer and comparison ledgers and reports");
  auto* report = app.add_subcommand("report", "rebuild reports from the ledgers in output_dir");
  for (auto* sub : {train_rnnlm, train_ng, gen, decode, bench, report}) {
    sub->add_option("--config", config_path, "key = value config file");
    sub->add_option("--set", overrides, "override one config key, key=value")->take_all();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    RunConfig c = load_config(config_path, overrides);
    if (decode->parsed() && beam != -1) {
      if (beam < 1) throw ConfigError("--beam must be >= 1");
      c.beam = static_cast<std::uint64_t>(beam);
    }
    if (train_rnnlm->parsed()) return cmd_train_rnnlm(c);
    if (train_ng->parsed()) return cmd_train_ngram(c);
    if (gen->parsed()) return cmd_gen_lattices(c, gen_mode);
    if (decode->parsed()) return cmd_decode(c, decode_mode, cache_flag == "on" && c.cache_enabled, files);
    if (bench->parsed()) return cmd_bench(c);
    write_reports(c.output_dir);
    return 0;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
