#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "otf_rnnlm/decoder.hpp"
#include "otf_rnnlm/lattice.hpp"
#include "otf_rnnlm/ngram.hpp"
#include "otf_rnnlm/rnnlm.hpp"

namespace otf {

/// Draws ranks 0..n-1 with P(k) proportional to 1/(k+1)^s.
class ZipfSampler {
 public:
  ZipfSampler(std::size_t n, double s) : cdf_(n) {
    if (n == 0) throw RangeError("Zipf support must be non-empty");
    double acc = 0;
    for (std::size_t k = 0; k < n; ++k) cdf_[k] = acc += 1.0 / std::pow(static_cast<double>(k + 1), s);
    for (auto& c : cdf_) c /= acc;
  }
  template <class Rng>
  std::size_t operator()(Rng& rng) const {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return static_cast<std::size_t>(std::upper_bound(cdf_.begin(), cdf_.end(), u) - cdf_.begin()) % cdf_.size();
  }
  std::size_t size() const noexcept { return cdf_.size(); }

 private:
  std::vector<double> cdf_;
};

struct CommandCorpusOptions {
  std::size_t vocab_words = 200;
  std::size_t templates = 50;
  std::size_t min_length = 3;
  std::size_t max_length = 7;
  double zipf_exponent = 1.0;
  double slot_probability = 0.3;  ///< chance one word of a sampled command is replaced
  std::uint64_t seed = 1;
};

/// Synthetic spoken-command source: a fixed set of command templates reused
/// with Zipfian frequency, occasionally with one word swapped.
class CommandGenerator {
 public:
  explicit CommandGenerator(const CommandCorpusOptions& opt)
      : opt_(opt), rng_(opt.seed), words_zipf_(opt.vocab_words, opt.zipf_exponent),
        template_zipf_(opt.templates, opt.zipf_exponent) {
    if (opt.min_length < 1 || opt.max_length < opt.min_length) throw RangeError("bad command length range");
    for (std::size_t t = 0; t < opt.templates; ++t) {
      const std::size_t len = opt.min_length + rng_() % (opt.max_length - opt.min_length + 1);
      std::vector<std::string> words;
      for (std::size_t i = 0; i < len; ++i) words.push_back(word(words_zipf_(rng_)));
      templates_.push_back(std::move(words));
    }
  }

  std::vector<std::string> sample() {
    auto words = templates_[template_zipf_(rng_)];
    if (static_cast<double>(rng_() >> 11) * 0x1.0p-53 < opt_.slot_probability)
      words[rng_() % words.size()] = word(words_zipf_(rng_));
    return words;
  }

  std::string sample_line() {
    std::string line;
    for (const auto& w : sample()) line += (line.empty() ? "" : " ") + w;
    return line;
  }

  const std::vector<std::vector<std::string>>& templates() const noexcept { return templates_; }
  static std::string word(std::size_t rank) { return "w" + std::to_string(rank); }

 private:
  CommandCorpusOptions opt_;
  std::mt19937_64 rng_;
  ZipfSampler words_zipf_;
  ZipfSampler template_zipf_;
  std::vector<std::vector<std::string>> templates_;
};

struct Utterance {
  std::string id;
  Sentence reference;
  Lattice lattice;
};

/// `count` sampled commands with one generated lattice each; utterance i
/// uses lattice seed lattice.seed + i.
inline std::vector<Utterance> make_utterances(CommandGenerator& gen, const Vocabulary& vocab,
                                              const NgramModel& small_lm, std::size_t count,
                                              const LatticeGenOptions& lattice) {
  std::vector<Utterance> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Sentence ref = vocab.tokenize(gen.sample_line());
    LatticeGenOptions opt = lattice;
    opt.seed = lattice.seed + i;
    char id[32];
    std::snprintf(id, sizeof id, "utt%05zu", i);
    Lattice lat = generate_lattice(ref, vocab, small_lm, opt);
    out.push_back({id, std::move(ref), std::move(lat)});
  }
  return out;
}

struct BenchModels {
  const Vocabulary* vocab;
  const RnnlmModel* rnnlm;
  const HuffmanTree* tree;
  const NgramModel* small_lm;    ///< the lattice LM
  const NgramModel* compare_lm;  ///< n-gram used by hybrid second pass
};

/// One utterance decoded under one cache policy.
struct SweepLedgerRow {
  std::uint64_t capacity_kb = 0;
  bool retain = false;
  std::string utterance;
  std::uint64_t lookups = 0, hits = 0, misses = 0, evictions = 0;
  std::uint64_t entries = 0;         ///< resident at end of utterance
  std::uint64_t resident_bytes = 0;  ///< at end of utterance
  std::uint64_t compute_calls = 0;
  std::uint64_t table_elements = 0;
  std::uint64_t table_bytes = 0;
  std::uint64_t requests = 0, bytes_indexed = 0, bytes_baseline = 0;
  std::uint64_t context_bytes = 0;
};

/// Capacity 0 without retention is the per-utterance policy; capacity 0
/// with retention keeps everything.
struct CachePolicy {
  std::uint64_t capacity_kb = 0;
  bool retain = false;
};

inline std::vector<SweepLedgerRow> run_cache_policy(const BenchModels& m, const std::vector<Utterance>& utts,
                                                    const CachePolicy& policy, const DecodeOptions& opt,
                                                    unsigned rnn_bits = kDefaultRnnBits) {
  if (utts.empty()) throw EmptyInputError("no utterances to decode");
  RescoreServer server(*m.rnnlm, *m.tree, *m.small_lm, m.vocab->sentence_begin_id(), rnn_bits);
  server.cache().set_capacity(policy.capacity_kb * 1000);
  std::vector<SweepLedgerRow> rows;
  for (const auto& u : utts) {
    const auto r = rescore_onthefly(u.lattice, server, opt);
    SweepLedgerRow row;
    row.capacity_kb = policy.capacity_kb;
    row.retain = policy.retain;
    row.utterance = u.id;
    row.lookups = r.cache.lookups;
    row.hits = r.cache.hits;
    row.misses = r.cache.misses;
    row.evictions = r.cache.evictions;
    row.entries = r.cache.entries;
    row.resident_bytes = r.cache.resident_bytes;
    row.compute_calls = r.compute_calls;
    const auto mem = server.table().memory_report();
    row.table_elements = mem.element_count;
    row.table_bytes = mem.total_bytes;
    row.requests = r.transfer.requests;
    row.bytes_indexed = r.transfer.bytes_indexed;
    row.bytes_baseline = r.transfer.bytes_full_baseline;
    row.context_bytes = r.transfer.context_bytes;
    rows.push_back(std::move(row));
    server.reset_utterance(policy.retain);
  }
  return rows;
}

/// Capacity sweep: 0 is per-utterance reset, anything else keeps cache and
/// table across utterances under that byte bound.
inline std::vector<SweepLedgerRow> run_capacity_sweep(const BenchModels& m, const std::vector<Utterance>& utts,
                                                      const std::vector<std::uint64_t>& capacities_kb,
                                                      const DecodeOptions& opt, unsigned rnn_bits = kDefaultRnnBits) {
  std::vector<SweepLedgerRow> all;
  for (std::uint64_t cap : capacities_kb) {
    auto rows = run_cache_policy(m, utts, {cap, cap != 0}, opt, rnn_bits);
    all.insert(all.end(), rows.begin(), rows.end());
  }
  return all;
}

struct ComparisonLedgerRow {
  std::string mode;  ///< "1/ngram", "1/rnnlm", "2/hybrid", "2/rnnlm"
  std::string utterance;
  std::uint64_t errors = 0;
  std::uint64_t ref_words = 0;
  double rescored_score = 0;    ///< acoustic + lm_weight * ln P_rnn of the winner
  std::uint64_t rnnlm_calls = 0;  ///< RNNLM steps spent
};

struct ComparisonOptions {
  DecodeOptions decode;
  std::size_t nbest_n = 10;
  double interp_weight = 0.5;
};

/// The four decoding strategies on every utterance, per-utterance reset for
/// the on-the-fly decoder.
inline std::vector<ComparisonLedgerRow> run_comparison(const BenchModels& m, const std::vector<Utterance>& utts,
                                                       const ComparisonOptions& opt) {
  if (utts.empty()) throw EmptyInputError("no utterances to decode");
  RescoreServer server(*m.rnnlm, *m.tree, *m.small_lm, m.vocab->sentence_begin_id());
  const WordId eos = m.vocab->sentence_end_id();
  std::vector<ComparisonLedgerRow> rows;
  for (const auto& u : utts) {
    auto add = [&](const std::string& mode, const PathHypothesis& h, std::uint64_t calls) {
      ComparisonLedgerRow r;
      r.mode = mode;
      r.utterance = u.id;
      r.errors = word_errors(strip_sentence_end(h.words, eos), u.reference);
      r.ref_words = u.reference.size();
      r.rescored_score = rescored_score(h, *m.rnnlm, *m.tree, opt.decode.lm_weight);
      r.rnnlm_calls = calls;
      rows.push_back(std::move(r));
    };
    const auto hyps = nbest(u.lattice, opt.nbest_n, opt.decode.lm_weight);
    add("1/ngram", hyps.front(), 0);
    const auto onthefly = rescore_onthefly(u.lattice, server, opt.decode);
    server.reset_utterance(false);
    add("1/rnnlm", onthefly.best, onthefly.compute_calls);
    std::uint64_t second_pass_calls = 0;
    for (const auto& h : hyps) second_pass_calls += h.words.size();
    add("2/hybrid",
        rescore_twopass(hyps, TwoPassMode::hybrid, *m.rnnlm, *m.tree, *m.compare_lm, m.vocab->sentence_begin_id(),
                        opt.interp_weight, opt.decode.lm_weight),
        second_pass_calls);
    add("2/rnnlm",
        rescore_twopass(hyps, TwoPassMode::rnnlm, *m.rnnlm, *m.tree, *m.compare_lm, m.vocab->sentence_begin_id(),
                        opt.interp_weight, opt.decode.lm_weight),
        second_pass_calls);
  }
  return rows;
}

// Ledger files: tab-separated, one header line.

inline constexpr const char* kSweepLedgerHeader =
    "capacity_kb\tretain\tutterance\tlookups\thits\tmisses\tevictions\tentries\tresident_bytes\tcompute_calls\t"
    "table_elements\ttable_bytes\trequests\tbytes_indexed\tbytes_baseline\tcontext_bytes";
inline constexpr const char* kComparisonLedgerHeader = "mode\tutterance\terrors\tref_words\trescored_score\trnnlm_calls";

inline void write_sweep_ledger(std::ostream& out, const std::vector<SweepLedgerRow>& rows) {
  out << kSweepLedgerHeader << '\n';
  for (const auto& r : rows)
    out << r.capacity_kb << '\t' << (r.retain ? 1 : 0) << '\t' << r.utterance << '\t' << r.lookups << '\t' << r.hits
        << '\t' << r.misses << '\t' << r.evictions << '\t' << r.entries << '\t' << r.resident_bytes << '\t'
        << r.compute_calls << '\t' << r.table_elements << '\t' << r.table_bytes << '\t' << r.requests << '\t'
        << r.bytes_indexed << '\t' << r.bytes_baseline << '\t' << r.context_bytes << '\n';
}

inline void write_comparison_ledger(std::ostream& out, const std::vector<ComparisonLedgerRow>& rows) {
  out << kComparisonLedgerHeader << '\n';
  for (const auto& r : rows)
    out << r.mode << '\t' << r.utterance << '\t' << r.errors << '\t' << r.ref_words << '\t'
        << detail::format_double(r.rescored_score) << '\t' << r.rnnlm_calls << '\n';
}

namespace detail {
inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> f;
  std::size_t pos = 0;
  for (;;) {
    auto tab = line.find('\t', pos);
    f.push_back(line.substr(pos, tab == std::string::npos ? std::string::npos : tab - pos));
    if (tab == std::string::npos) return f;
    pos = tab + 1;
  }
}
inline std::uint64_t parse_u64(const std::string& s, std::size_t line) {
  std::uint64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw FormatError(line, "bad integer '" + s + "'");
  return v;
}
}  // namespace detail

inline std::vector<SweepLedgerRow> read_sweep_ledger(std::istream& in) {
  std::vector<SweepLedgerRow> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    if (++lineno == 1) {
      if (line != kSweepLedgerHeader) throw FormatError(1, "unexpected sweep ledger header");
      continue;
    }
    if (line.empty()) continue;
    auto f = detail::split_tabs(line);
    if (f.size() != 16) throw FormatError(lineno, "expected 16 fields");
    auto u = [&](std::size_t i) { return detail::parse_u64(f[i], lineno); };
    SweepLedgerRow r;
    r.capacity_kb = u(0);
    r.retain = u(1) != 0;
    r.utterance = f[2];
    r.lookups = u(3);
    r.hits = u(4);
    r.misses = u(5);
    r.evictions = u(6);
    r.entries = u(7);
    r.resident_bytes = u(8);
    r.compute_calls = u(9);
    r.table_elements = u(10);
    r.table_bytes = u(11);
    r.requests = u(12);
    r.bytes_indexed = u(13);
    r.bytes_baseline = u(14);
    r.context_bytes = u(15);
    rows.push_back(std::move(r));
  }
  if (lineno == 0) throw FormatError(0, "empty sweep ledger");
  return rows;
}

inline std::vector<ComparisonLedgerRow> read_comparison_ledger(std::istream& in) {
  std::vector<ComparisonLedgerRow> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    if (++lineno == 1) {
      if (line != kComparisonLedgerHeader) throw FormatError(1, "unexpected comparison ledger header");
      continue;
    }
    if (line.empty()) continue;
    auto f = detail::split_tabs(line);
    if (f.size() != 6) throw FormatError(lineno, "expected 6 fields");
    rows.push_back({f[0], f[1], detail::parse_u64(f[2], lineno), detail::parse_u64(f[3], lineno),
                    detail::parse_double(f[4], lineno), detail::parse_u64(f[5], lineno)});
  }
  if (lineno == 0) throw FormatError(0, "empty comparison ledger");
  return rows;
}

/// One row of the capacity sweep table; per-utterance means are over the
/// end-of-utterance snapshots.
struct SweepSummary {
  std::uint64_t capacity_kb = 0;
  bool retain = false;
  std::uint64_t utterances = 0;
  std::uint64_t entries_sum = 0;
  std::uint64_t resident_bytes_sum = 0;
  std::uint64_t lookups = 0, hits = 0, misses = 0, evictions = 0, compute_calls = 0;
  std::uint64_t table_elements_sum = 0, table_bytes_sum = 0;
  double min_utterance_hit_ratio = 1.0;
  double mean_utterance_hit_ratio = 0.0;

  double entries_mean() const { return utterances ? double(entries_sum) / double(utterances) : 0; }
  double resident_mb_mean() const { return utterances ? double(resident_bytes_sum) / double(utterances) / 1e6 : 0; }
  double table_mb_mean() const { return utterances ? double(table_bytes_sum) / double(utterances) / 1e6 : 0; }
  double hit_ratio() const { return lookups ? double(hits) / double(lookups) : 0; }
};

/// Groups ledger rows by policy, in first-appearance order.
inline std::vector<SweepSummary> summarize_sweep(const std::vector<SweepLedgerRow>& rows) {
  std::vector<SweepSummary> out;
  for (const auto& r : rows) {
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const SweepSummary& s) { return s.capacity_kb == r.capacity_kb && s.retain == r.retain; });
    if (it == out.end()) {
      out.push_back({});
      it = out.end() - 1;
      it->capacity_kb = r.capacity_kb;
      it->retain = r.retain;
    }
    ++it->utterances;
    it->entries_sum += r.entries;
    it->resident_bytes_sum += r.resident_bytes;
    it->lookups += r.lookups;
    it->hits += r.hits;
    it->misses += r.misses;
    it->evictions += r.evictions;
    it->compute_calls += r.compute_calls;
    it->table_elements_sum += r.table_elements;
    it->table_bytes_sum += r.table_bytes;
    const double ratio = r.lookups ? double(r.hits) / double(r.lookups) : 0.0;
    it->min_utterance_hit_ratio = std::min(it->min_utterance_hit_ratio, ratio);
    it->mean_utterance_hit_ratio += ratio;
  }
  for (auto& s : out) s.mean_utterance_hit_ratio /= static_cast<double>(s.utterances);
  return out;
}

struct TransferSummary {
  std::uint64_t requests = 0, bytes_indexed = 0, bytes_baseline = 0, context_bytes = 0;
  double ratio() const { return bytes_indexed ? double(bytes_baseline) / double(bytes_indexed) : 0; }
};

/// Traffic of the first policy in the ledger.
inline TransferSummary summarize_transfer(const std::vector<SweepLedgerRow>& rows) {
  TransferSummary t;
  if (rows.empty()) return t;
  for (const auto& r : rows) {
    if (r.capacity_kb != rows.front().capacity_kb || r.retain != rows.front().retain) continue;
    t.requests += r.requests;
    t.bytes_indexed += r.bytes_indexed;
    t.bytes_baseline += r.bytes_baseline;
    t.context_bytes = r.context_bytes;
  }
  return t;
}

struct ComparisonSummary {
  std::string mode;
  std::uint64_t utterances = 0, errors = 0, ref_words = 0, rnnlm_calls = 0;
  double score_sum = 0;
  double error_rate() const { return ref_words ? double(errors) / double(ref_words) : 0; }
  double mean_score() const { return utterances ? score_sum / double(utterances) : 0; }
};

inline std::vector<ComparisonSummary> summarize_comparison(const std::vector<ComparisonLedgerRow>& rows) {
  std::vector<ComparisonSummary> out;
  for (const auto& r : rows) {
    auto it = std::find_if(out.begin(), out.end(), [&](const auto& s) { return s.mode == r.mode; });
    if (it == out.end()) {
      out.push_back({r.mode});
      it = out.end() - 1;
    }
    ++it->utterances;
    it->errors += r.errors;
    it->ref_words += r.ref_words;
    it->rnnlm_calls += r.rnnlm_calls;
    it->score_sum += r.rescored_score;
  }
  return out;
}

inline void write_sweep_report(std::ostream& out, const std::vector<SweepSummary>& rows) {
  out << "capacity_kb\tretain\tutterances\tentries_mean\tresident_bytes_sum\tresident_mb_mean\tcompute_calls\t"
         "lookups\thits\thit_ratio\tmin_utt_hit_ratio\tevictions\ttable_mb_mean\n";
  for (const auto& s : rows)
    out << s.capacity_kb << '\t' << (s.retain ? 1 : 0) << '\t' << s.utterances << '\t' << s.entries_mean() << '\t'
        << s.resident_bytes_sum << '\t' << s.resident_mb_mean() << '\t' << s.compute_calls << '\t' << s.lookups
        << '\t' << s.hits << '\t' << s.hit_ratio() << '\t' << s.min_utterance_hit_ratio << '\t' << s.evictions
        << '\t' << s.table_mb_mean() << '\n';
}

inline void write_transfer_report(std::ostream& out, const TransferSummary& t) {
  out << "requests\tcontext_bytes\tbytes_indexed\tbytes_baseline\tratio\n"
      << t.requests << '\t' << t.context_bytes << '\t' << t.bytes_indexed << '\t' << t.bytes_baseline << '\t'
      << t.ratio() << '\n';
}

inline void write_comparison_report(std::ostream& out, const std::vector<ComparisonSummary>& rows) {
  out << "mode\tutterances\terrors\tref_words\ttoken_error_rate\tmean_rescored_score\trnnlm_calls\n";
  for (const auto& s : rows)
    out << s.mode << '\t' << s.utterances << '\t' << s.errors << '\t' << s.ref_words << '\t' << s.error_rate() << '\t'
        << s.mean_score() << '\t' << s.rnnlm_calls << '\n';
}

}  // namespace otf
