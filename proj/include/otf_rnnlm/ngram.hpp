#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "otf_rnnlm/error.hpp"
#include "otf_rnnlm/vocab.hpp"

namespace otf {

enum class Smoothing { kneser_ney, absolute_discount };

struct NgramOptions {
  int order = 3;
  Smoothing smoothing = Smoothing::kneser_ney;
  /// Fixed discount for every order. Negative means "estimate per order as
  /// n1 / (n1 + 2 n2)" over that order's counts of counts.
  double discount = -1.0;
};

namespace detail {

inline constexpr int kMaxNgramOrder = 5;

struct NgramKey {
  std::array<WordId, kMaxNgramOrder> w{};
  std::uint8_t len = 0;

  NgramKey() = default;
  NgramKey(std::span<const WordId> words) : len(static_cast<std::uint8_t>(words.size())) {
    std::copy(words.begin(), words.end(), w.begin());
  }
  NgramKey(std::span<const WordId> ctx, WordId last) : len(static_cast<std::uint8_t>(ctx.size() + 1)) {
    std::copy(ctx.begin(), ctx.end(), w.begin());
    w[ctx.size()] = last;
  }
  std::span<const WordId> words() const { return {w.data(), len}; }
  NgramKey drop_front() const { return NgramKey(words().subspan(1)); }
  NgramKey drop_back() const { return NgramKey(words().first(len - 1u)); }

  friend bool operator==(const NgramKey& a, const NgramKey& b) {
    return a.len == b.len && std::equal(a.w.begin(), a.w.begin() + a.len, b.w.begin());
  }
};

struct NgramKeyHash {
  std::size_t operator()(const NgramKey& k) const noexcept {
    std::uint64_t h = 0xcbf29ce484222325ull ^ k.len;
    for (std::uint8_t i = 0; i < k.len; ++i) {
      h ^= k.w[i] + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
      h *= 0x100000001b3ull;
    }
    return static_cast<std::size_t>(h);
  }
};

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, std::size_t line) {
  double v = 0;
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw FormatError(line, "bad number '" + std::string(s) + "'");
  return v;
}

}  // namespace detail

/// Back-off n-gram model over a fixed vocabulary.
///
/// Stored probabilities and back-off weights are kept in log10, the form the
/// ARPA format carries, so a write/read cycle reproduces every score
/// bit-exactly. logprob() answers in natural log.
class NgramModel {
 public:
  NgramModel() = default;

  int order() const noexcept { return order_; }
  std::size_t vocab_size() const noexcept { return vocab_size_; }
  const std::vector<double>& discounts() const noexcept { return discounts_; }
  std::size_t entry_count(int k) const { return tables_.at(static_cast<std::size_t>(k - 1)).size(); }

  /// ln P(w | context). Only the last order()-1 context words are used; a
  /// missing n-gram backs off through the stored weights.
  double logprob(std::span<const WordId> context, WordId w) const {
    if (w >= vocab_size_)
      throw RangeError("word id " + std::to_string(w) + " outside n-gram vocabulary");
    std::size_t len = std::min<std::size_t>(context.size(), static_cast<std::size_t>(order_ - 1));
    auto hist = context.last(len);
    double acc10 = 0.0;
    for (;;) {
      const auto& table = tables_[len];
      if (auto it = table.find(detail::NgramKey(hist, w)); it != table.end())
        return (acc10 + it->second.prob10) * std::numbers::ln10;
      if (len == 0) return -std::numeric_limits<double>::infinity();
      const auto& lower = tables_[len - 1];
      if (auto it = lower.find(detail::NgramKey(hist)); it != lower.end())
        acc10 += it->second.backoff10;
      hist = hist.last(--len);
    }
  }

  /// Uniform unigram model: every word has probability 1/vocab_size.
  static NgramModel uniform(std::size_t vocab_size) {
    std::vector<double> lp(vocab_size, -std::log(static_cast<double>(vocab_size)));
    return from_unigram_logprobs(lp);
  }

  /// Unigram model with the given natural-log probabilities.
  static NgramModel from_unigram_logprobs(std::span<const double> ln_probs) {
    NgramModel m;
    m.order_ = 1;
    m.vocab_size_ = ln_probs.size();
    m.tables_.resize(1);
    for (std::size_t w = 0; w < ln_probs.size(); ++w) {
      const WordId id = static_cast<WordId>(w);
      m.tables_[0][detail::NgramKey(std::span<const WordId>(&id, 1))] = {
          ln_probs[w] / std::numbers::ln10, 0.0};
    }
    return m;
  }

  void write_arpa(std::ostream& out, const Vocabulary& vocab) const {
    if (vocab.size() != vocab_size_) throw RangeError("vocabulary size mismatch");
    out << "\n\\data\\\n";
    for (int k = 1; k <= order_; ++k) out << "ngram " << k << "=" << tables_[k - 1].size() << "\n";
    for (int k = 1; k <= order_; ++k) {
      out << "\n\\" << k << "-grams:\n";
      // deterministic output order
      std::vector<const std::pair<const detail::NgramKey, Entry>*> rows;
      rows.reserve(tables_[k - 1].size());
      for (const auto& kv : tables_[k - 1]) rows.push_back(&kv);
      std::sort(rows.begin(), rows.end(), [](auto* a, auto* b) {
        return std::lexicographical_compare(a->first.w.begin(), a->first.w.begin() + a->first.len,
                                            b->first.w.begin(), b->first.w.begin() + b->first.len);
      });
      for (const auto* kv : rows) {
        out << detail::format_double(kv->second.prob10) << '\t';
        for (std::uint8_t i = 0; i < kv->first.len; ++i) {
          if (i) out << ' ';
          out << vocab.word(kv->first.w[i]);
        }
        if (k < order_) out << '\t' << detail::format_double(kv->second.backoff10);
        out << '\n';
      }
    }
    out << "\n\\end\\\n";
    if (!out) throw IoError("error while writing ARPA model");
  }

  static NgramModel read_arpa(std::istream& in, const Vocabulary& vocab) {
    NgramModel m;
    m.vocab_size_ = vocab.size();
    std::string line;
    std::size_t lineno = 0;
    int section = -1;  // -1 before \data\, 0 in \data\, k in k-grams
    std::vector<std::size_t> declared;
    bool ended = false;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      if (line == "\\data\\") {
        section = 0;
        continue;
      }
      if (line == "\\end\\") {
        ended = true;
        break;
      }
      if (line.front() == '\\') {
        int k = 0;
        if (std::sscanf(line.c_str(), "\\%d-grams:", &k) != 1 || k < 1 ||
            k > static_cast<int>(declared.size()))
          throw FormatError(lineno, "unexpected section header '" + line + "'");
        section = k;
        continue;
      }
      if (section == 0) {
        int k = 0;
        unsigned long long count = 0;
        if (std::sscanf(line.c_str(), "ngram %d=%llu", &k, &count) != 2 ||
            k != static_cast<int>(declared.size()) + 1 || k > detail::kMaxNgramOrder)
          throw FormatError(lineno, "bad ngram count line");
        declared.push_back(count);
        continue;
      }
      if (section < 1) throw FormatError(lineno, "content outside any section");
      std::vector<std::string> fields;
      {
        std::size_t pos = 0;
        while (pos <= line.size()) {
          auto tab = line.find('\t', pos);
          if (tab == std::string::npos) tab = line.size();
          fields.push_back(line.substr(pos, tab - pos));
          pos = tab + 1;
        }
      }
      if (fields.size() < 2 || fields.size() > 3) throw FormatError(lineno, "expected prob<TAB>words[<TAB>backoff]");
      Entry e{detail::parse_double(fields[0], lineno),
              fields.size() == 3 ? detail::parse_double(fields[2], lineno) : 0.0};
      std::vector<WordId> ids;
      std::istringstream ws(fields[1]);
      std::string tok;
      while (ws >> tok) {
        if (!vocab.contains(tok)) throw FormatError(lineno, "word '" + tok + "' not in vocabulary");
        ids.push_back(vocab.lookup(tok));
      }
      if (static_cast<int>(ids.size()) != section) throw FormatError(lineno, "wrong n-gram length");
      if (m.tables_.size() < static_cast<std::size_t>(section)) m.tables_.resize(static_cast<std::size_t>(section));
      m.tables_[static_cast<std::size_t>(section - 1)][detail::NgramKey(ids)] = e;
    }
    if (in.bad()) throw IoError("error while reading ARPA model");
    if (!ended) throw FormatError(lineno, "missing \\end\\");
    if (declared.empty()) throw FormatError(lineno, "missing \\data\\ section");
    m.order_ = static_cast<int>(declared.size());
    m.tables_.resize(declared.size());
    for (std::size_t k = 0; k < declared.size(); ++k)
      if (m.tables_[k].size() != declared[k])
        throw FormatError(lineno, "declared " + std::to_string(declared[k]) + " " +
                                      std::to_string(k + 1) + "-grams, found " +
                                      std::to_string(m.tables_[k].size()));
    return m;
  }

  friend NgramModel train_ngram(const Corpus& corpus, const Vocabulary& vocab,
                                const NgramOptions& options);

 private:
  struct Entry {
    double prob10;
    double backoff10;
  };
  using Table = std::unordered_map<detail::NgramKey, Entry, detail::NgramKeyHash>;

  int order_ = 0;
  std::size_t vocab_size_ = 0;
  std::vector<Table> tables_;
  std::vector<double> discounts_;
};

/// Interpolated absolute-discount training, written in back-off form.
///
/// With Smoothing::kneser_ney every order below the highest uses
/// continuation counts (number of distinct left extensions), except n-grams
/// that start with `<s>`, which keep their raw counts. The unigram level is
/// interpolated with the uniform distribution over the whole vocabulary.
inline NgramModel train_ngram(const Corpus& corpus, const Vocabulary& vocab,
                              const NgramOptions& options) {
  using detail::NgramKey;
  const int order = options.order;
  if (order < 1 || order > detail::kMaxNgramOrder)
    throw RangeError("n-gram order must be in 1.." + std::to_string(detail::kMaxNgramOrder));
  if (corpus.empty()) throw EmptyInputError("empty training corpus");
  if (options.discount >= 1.0) throw RangeError("discount must be < 1");
  const std::size_t V = vocab.size();
  const WordId bos = vocab.sentence_begin_id();
  const WordId eos = vocab.sentence_end_id();

  using Counts = std::unordered_map<NgramKey, double, detail::NgramKeyHash>;
  std::vector<Counts> raw(static_cast<std::size_t>(order));
  std::vector<WordId> tokens;
  for (const auto& s : corpus) {
    tokens.assign(1, bos);
    for (WordId w : s) {
      if (w >= V) throw RangeError("corpus word id outside vocabulary");
      tokens.push_back(w);
    }
    tokens.push_back(eos);
    for (std::size_t j = 1; j < tokens.size(); ++j)
      for (int k = 1; k <= order && static_cast<std::size_t>(k) <= j + 1; ++k)
        raw[static_cast<std::size_t>(k - 1)][NgramKey(std::span<const WordId>(tokens).subspan(j + 1 - static_cast<std::size_t>(k), static_cast<std::size_t>(k)))] += 1.0;
  }

  std::vector<Counts> adj(static_cast<std::size_t>(order));
  for (int k = order; k >= 1; --k) {
    auto& a = adj[static_cast<std::size_t>(k - 1)];
    const auto& r = raw[static_cast<std::size_t>(k - 1)];
    if (k == order || options.smoothing == Smoothing::absolute_discount) {
      a = r;
      continue;
    }
    for (const auto& [g, c] : r)
      if (g.w[0] == bos) a[g] = c;
    for (const auto& [g, c] : raw[static_cast<std::size_t>(k)]) {
      NgramKey suffix = g.drop_front();
      if (suffix.w[0] != bos) a[suffix] += 1.0;
    }
  }

  NgramModel m;
  m.order_ = order;
  m.vocab_size_ = V;
  m.tables_.resize(static_cast<std::size_t>(order));
  m.discounts_.resize(static_cast<std::size_t>(order));
  for (int k = 1; k <= order; ++k) {
    double d = options.discount;
    if (d < 0.0) {
      double n1 = 0, n2 = 0;
      for (const auto& [g, c] : adj[static_cast<std::size_t>(k - 1)]) {
        if (c == 1.0) ++n1;
        if (c == 2.0) ++n2;
      }
      d = (n1 > 0 && n2 > 0) ? n1 / (n1 + 2.0 * n2) : 0.5;
    }
    m.discounts_[static_cast<std::size_t>(k - 1)] = d;
  }

  // unigrams
  {
    const double d = m.discounts_[0];
    double total = 0, types = 0;
    for (const auto& [g, c] : adj[0]) {
      total += c;
      types += 1;
    }
    const double gamma = d * types / total;
    auto& table = m.tables_[0];
    for (std::size_t w = 0; w < V; ++w) {
      const WordId id = static_cast<WordId>(w);
      NgramKey key(std::span<const WordId>(&id, 1));
      auto it = adj[0].find(key);
      const double c = it == adj[0].end() ? 0.0 : it->second;
      const double p = std::max(c - d, 0.0) / total + gamma / static_cast<double>(V);
      table[key] = {std::log10(p), 0.0};
    }
  }

  for (int k = 2; k <= order; ++k) {
    const double d = m.discounts_[static_cast<std::size_t>(k - 1)];
    const auto& a = adj[static_cast<std::size_t>(k - 1)];
    struct CtxStat {
      double sum = 0, types = 0;
    };
    std::unordered_map<NgramKey, CtxStat, detail::NgramKeyHash> ctx;
    for (const auto& [g, c] : a) {
      auto& s = ctx[g.drop_back()];
      s.sum += c;
      s.types += 1;
    }
    // back-off weights live on the context's own entry one order down
    auto& lower = m.tables_[static_cast<std::size_t>(k - 2)];
    for (const auto& [h, s] : ctx) {
      auto it = lower.find(h);
      if (it == lower.end()) throw Error("internal: context without lower-order entry");
      it->second.backoff10 = std::log10(d * s.types / s.sum);
    }
    auto& table = m.tables_[static_cast<std::size_t>(k - 1)];
    for (const auto& [g, c] : a) {
      const NgramKey h = g.drop_back();
      const auto& s = ctx[h];
      const WordId w = g.w[g.len - 1];
      const double lower_p = std::exp(m.logprob(h.words().subspan(1), w));
      const double p = std::max(c - d, 0.0) / s.sum + (d * s.types / s.sum) * lower_p;
      table[g] = {std::log10(p), 0.0};
    }
  }
  return m;
}

/// ln P of `words` scored left to right from the `<s>` context. The caller
/// appends `</s>` when the sentence end should be scored.
inline double sequence_logprob(const NgramModel& model, std::span<const WordId> words, WordId bos) {
  std::vector<WordId> hist{bos};
  double total = 0;
  for (WordId w : words) {
    total += model.logprob(hist, w);
    hist.push_back(w);
  }
  return total;
}

inline double ngram_logprob(const NgramModel& model, std::span<const WordId> context, WordId w) {
  return model.logprob(context, w);
}

/// exp(-(1/T) Σ ln P) with T counting every word plus one `</s>` per sentence.
inline double perplexity(const NgramModel& model, const Corpus& corpus, const Vocabulary& vocab) {
  if (corpus.empty()) throw EmptyInputError("empty evaluation corpus");
  double total = 0;
  std::size_t tokens = 0;
  std::vector<WordId> words;
  for (const auto& s : corpus) {
    words.assign(s.begin(), s.end());
    words.push_back(vocab.sentence_end_id());
    total += sequence_logprob(model, words, vocab.sentence_begin_id());
    tokens += words.size();
  }
  return std::exp(-total / static_cast<double>(tokens));
}

}  // namespace otf
