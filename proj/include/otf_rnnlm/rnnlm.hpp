#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "otf_rnnlm/error.hpp"
#include "otf_rnnlm/huffman.hpp"
#include "otf_rnnlm/vocab.hpp"

namespace otf {

inline constexpr std::size_t kMaxMaxentOrder = 8;

struct RnnlmShape {
  std::size_t hidden_size = 100;
  std::size_t vocab_size = 0;
  std::size_t maxent_order = 3;
  unsigned maxent_table_bits = 20;  ///< table holds 2^bits weights
  std::uint64_t hash_seed = 0x5eed5eed5eed5eedull;

  std::uint64_t maxent_size() const { return std::uint64_t{1} << maxent_table_bits; }
  friend bool operator==(const RnnlmShape&, const RnnlmShape&) = default;
};

/// Elman recurrent LM with a tree-factored output layer and hashed n-gram
/// direct connections into every tree node.
///
/// Real is the storage type; production models use float, gradient checks
/// instantiate double. Every accumulation is done in double.
template <class Real>
struct BasicRnnlmModel {
  RnnlmShape shape;
  std::vector<Real> input_weights;      ///< vocab_size rows of hidden_size
  std::vector<Real> recurrent_weights;  ///< hidden_size x hidden_size, row = target unit
  std::vector<Real> node_vectors;       ///< (vocab_size-1) rows of hidden_size
  std::vector<Real> maxent;             ///< 2^maxent_table_bits

  BasicRnnlmModel() = default;

  explicit BasicRnnlmModel(const RnnlmShape& s) : shape(s) {
    if (s.hidden_size == 0) throw RangeError("hidden size must be positive");
    if (s.vocab_size < 2) throw RangeError("RNNLM needs at least 2 words");
    if (s.maxent_order > kMaxMaxentOrder)
      throw RangeError("maxent order above " + std::to_string(kMaxMaxentOrder));
    if (s.maxent_table_bits > 40) throw RangeError("maxent table bits above 40");
    input_weights.assign(s.vocab_size * s.hidden_size, Real(0));
    recurrent_weights.assign(s.hidden_size * s.hidden_size, Real(0));
    node_vectors.assign((s.vocab_size - 1) * s.hidden_size, Real(0));
    maxent.assign(s.maxent_size(), Real(0));
  }

  /// Weights uniform in [-scale, scale) from a seeded mt19937_64; the MaxEnt
  /// table starts at zero.
  static BasicRnnlmModel random(const RnnlmShape& s, std::uint64_t seed, double scale = 0.1) {
    BasicRnnlmModel m(s);
    std::mt19937_64 rng(seed);
    auto draw = [&] {
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      return static_cast<Real>((2.0 * u - 1.0) * scale);
    };
    for (auto& x : m.input_weights) x = draw();
    for (auto& x : m.recurrent_weights) x = draw();
    for (auto& x : m.node_vectors) x = draw();
    return m;
  }

  std::size_t hidden_size() const noexcept { return shape.hidden_size; }
  std::size_t vocab_size() const noexcept { return shape.vocab_size; }
  std::size_t maxent_order() const noexcept { return shape.maxent_order; }
  std::uint64_t maxent_mask() const noexcept { return shape.maxent_size() - 1; }

  std::span<const Real> input_row(WordId w) const {
    return {input_weights.data() + std::size_t{w} * shape.hidden_size, shape.hidden_size};
  }
  std::span<const Real> node_row(std::uint32_t node) const {
    return {node_vectors.data() + std::size_t{node} * shape.hidden_size, shape.hidden_size};
  }

  bool all_finite() const {
    auto ok = [](const std::vector<Real>& v) {
      for (Real x : v)
        if (!std::isfinite(x)) return false;
      return true;
    };
    return ok(input_weights) && ok(recurrent_weights) && ok(node_vectors) && ok(maxent);
  }

  friend bool operator==(const BasicRnnlmModel&, const BasicRnnlmModel&) = default;
};

template <class To, class From>
BasicRnnlmModel<To> convert_model(const BasicRnnlmModel<From>& m) {
  BasicRnnlmModel<To> out;
  out.shape = m.shape;
  auto cvt = [](const std::vector<From>& v) { return std::vector<To>(v.begin(), v.end()); };
  out.input_weights = cvt(m.input_weights);
  out.recurrent_weights = cvt(m.recurrent_weights);
  out.node_vectors = cvt(m.node_vectors);
  out.maxent = cvt(m.maxent);
  return out;
}

/// Previous hidden layer plus the most recent words, newest last.
template <class Real>
struct BasicRnnlmContext {
  std::vector<Real> hidden;
  std::vector<WordId> history;

  /// Utterance-start context: zero hidden layer, empty history.
  static BasicRnnlmContext zero(std::size_t hidden_size) {
    return {std::vector<Real>(hidden_size, Real(0)), {}};
  }

  friend bool operator==(const BasicRnnlmContext&, const BasicRnnlmContext&) = default;
};

using RnnlmModel = BasicRnnlmModel<float>;
using RnnlmContext = BasicRnnlmContext<float>;

/// Feature hashing for the direct connections.
///
/// The feature of order k (1 <= k <= maxent_order) conditions on the last k-1
/// history words. Its base hash is
///   b = mix(seed ^ k * 0x9E3779B97F4A7C15), then b = mix(b ^ (w + 1) * 0xBF58476D1CE4E5B9)
/// for each of those words from oldest to newest, and the weight for tree
/// node j sits at mix(b + (j + 1) * 0x94D049BB133111EB) & (2^bits - 1), with
/// mix the splitmix64 finalizer.
struct MaxentHash {
  static constexpr std::uint64_t mix(std::uint64_t x) noexcept {
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ull;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBull;
    x ^= x >> 31;
    return x;
  }
  static constexpr std::uint64_t base(std::uint64_t seed, std::span<const WordId> words,
                                      std::size_t order) noexcept {
    std::uint64_t h = mix(seed ^ (order * 0x9E3779B97F4A7C15ull));
    for (WordId w : words) h = mix(h ^ ((std::uint64_t{w} + 1) * 0xBF58476D1CE4E5B9ull));
    return h;
  }
  static constexpr std::uint64_t slot(std::uint64_t base, std::uint32_t node,
                                      std::uint64_t mask) noexcept {
    return mix(base + (std::uint64_t{node} + 1) * 0x94D049BB133111EBull) & mask;
  }
};

/// Base hashes of the features active for `history`, lowest order first.
struct MaxentFeatures {
  std::array<std::uint64_t, kMaxMaxentOrder> bases{};
  std::size_t count = 0;
};

template <class Real>
MaxentFeatures active_features(const BasicRnnlmModel<Real>& m, std::span<const WordId> history) {
  MaxentFeatures f;
  for (std::size_t k = 1; k <= m.maxent_order() && k - 1 <= history.size(); ++k)
    f.bases[f.count++] = MaxentHash::base(m.shape.hash_seed, history.last(k - 1), k);
  return f;
}

namespace detail {

inline double log_sigmoid(double x) {
  return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

template <class Real>
void check_context(const BasicRnnlmModel<Real>& m, const BasicRnnlmContext<Real>& ctx) {
  if (ctx.hidden.size() != m.hidden_size())
    throw RangeError("context hidden size " + std::to_string(ctx.hidden.size()) +
                     " does not match model hidden size " + std::to_string(m.hidden_size()));
  if (ctx.history.size() > m.maxent_order()) throw RangeError("context history longer than maxent order");
}

template <class Real>
void check_word(const BasicRnnlmModel<Real>& m, WordId w) {
  if (w >= m.vocab_size())
    throw RangeError("word id " + std::to_string(w) + " outside RNNLM vocabulary of " +
                     std::to_string(m.vocab_size()));
}

}  // namespace detail

/// Pre-sigmoid activation of tree node `node` for hidden state `hidden`.
template <class Real>
double node_activation(const BasicRnnlmModel<Real>& m, std::span<const Real> hidden,
                       const MaxentFeatures& features, std::uint32_t node) {
  const auto row = m.node_row(node);
  double a = 0;
  for (std::size_t i = 0; i < row.size(); ++i) a += static_cast<double>(row[i]) * hidden[i];
  for (std::size_t k = 0; k < features.count; ++k)
    a += m.maxent[MaxentHash::slot(features.bases[k], node, m.maxent_mask())];
  return a;
}

/// Consumes `w`: hidden' = sigmoid(input[w] + recurrent * hidden), and `w` is
/// appended to the history, dropping the oldest word past maxent_order.
template <class Real>
BasicRnnlmContext<Real> advance_context(const BasicRnnlmModel<Real>& m,
                                        const BasicRnnlmContext<Real>& ctx, WordId w) {
  detail::check_word(m, w);
  detail::check_context(m, ctx);
  const std::size_t H = m.hidden_size();
  BasicRnnlmContext<Real> next;
  next.hidden.resize(H);
  const auto in = m.input_row(w);
  for (std::size_t i = 0; i < H; ++i) {
    double z = in[i];
    const Real* row = m.recurrent_weights.data() + i * H;
    for (std::size_t j = 0; j < H; ++j) z += static_cast<double>(row[j]) * ctx.hidden[j];
    next.hidden[i] = static_cast<Real>(detail::sigmoid(z));
  }
  const std::size_t order = m.maxent_order();
  const std::size_t keep = ctx.history.size() + 1 > order ? order : ctx.history.size() + 1;
  if (keep > 0) {
    next.history.assign(ctx.history.end() - static_cast<std::ptrdiff_t>(keep - 1), ctx.history.end());
    next.history.push_back(w);
  }
  return next;
}

/// ln P(w | ctx): sum of log-sigmoid decisions along w's tree path, each
/// activation being node_vector·hidden plus the node's hashed features.
/// `node_evals`, when given, is incremented once per evaluated node.
template <class Real>
double word_logprob(const BasicRnnlmModel<Real>& m, const HuffmanTree& tree,
                    const BasicRnnlmContext<Real>& ctx, WordId w,
                    std::size_t* node_evals = nullptr) {
  detail::check_word(m, w);
  detail::check_context(m, ctx);
  if (tree.leaf_count() != m.vocab_size()) throw RangeError("tree and model vocabularies differ");
  const auto features = active_features(m, ctx.history);
  double lp = 0;
  for (const PathStep& step : tree.path(w)) {
    const double a = node_activation(m, std::span<const Real>(ctx.hidden), features, step.node);
    lp += detail::log_sigmoid(step.bit == 0 ? a : -a);
  }
  if (node_evals) *node_evals += tree.path_length(w);
  return lp;
}

/// The uncached RNNLM step: probability of `w` and the context after it.
template <class Real>
std::pair<double, BasicRnnlmContext<Real>> compute_rnnlm(const BasicRnnlmModel<Real>& m,
                                                         const HuffmanTree& tree, WordId w,
                                                         const BasicRnnlmContext<Real>& ctx) {
  return {word_logprob(m, tree, ctx, w), advance_context(m, ctx, w)};
}

/// ln P of `words` from the zero context; `words` should end in `</s>` when
/// the sentence end is to be scored.
template <class Real>
double sequence_logprob(const BasicRnnlmModel<Real>& m, const HuffmanTree& tree,
                        std::span<const WordId> words) {
  auto ctx = BasicRnnlmContext<Real>::zero(m.hidden_size());
  double total = 0;
  for (WordId w : words) {
    total += word_logprob(m, tree, ctx, w);
    ctx = advance_context(m, ctx, w);
  }
  return total;
}

template <class Real>
double rnnlm_perplexity(const BasicRnnlmModel<Real>& m, const HuffmanTree& tree,
                        const Corpus& corpus, WordId eos) {
  if (corpus.empty()) throw EmptyInputError("empty evaluation corpus");
  double total = 0;
  std::size_t tokens = 0;
  std::vector<WordId> words;
  for (const auto& s : corpus) {
    words.assign(s.begin(), s.end());
    words.push_back(eos);
    total += sequence_logprob(m, tree, words);
    tokens += words.size();
  }
  return std::exp(-total / static_cast<double>(tokens));
}

// Binary model file, all integers and reals little-endian:
//   "RNLM" | u32 version=1 | u32 H | u32 n | u32 maxent_order | u32 maxent_table_bits
//   | u64 hash_seed | f32 input[n*H] | f32 recurrent[H*H] | f32 nodes[(n-1)*H] | f32 maxent[2^bits]
inline constexpr char kModelMagic[4] = {'R', 'N', 'L', 'M'};
inline constexpr std::uint32_t kModelVersion = 1;

namespace detail {

template <class T>
void put_le(std::ostream& out, T v) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  U u = std::bit_cast<U>(v);
  char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<char>((u >> (8 * i)) & 0xff);
  out.write(buf, sizeof buf);
}

template <class T>
T get_le(std::istream& in) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  unsigned char buf[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof buf)) throw FormatError(0, "truncated model file");
  U u = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) u |= static_cast<U>(buf[i]) << (8 * i);
  return std::bit_cast<T>(u);
}

}  // namespace detail

inline void write_model(std::ostream& out, const RnnlmModel& m) {
  out.write(kModelMagic, 4);
  detail::put_le<std::uint32_t>(out, kModelVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.shape.hidden_size));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.shape.vocab_size));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.shape.maxent_order));
  detail::put_le<std::uint32_t>(out, m.shape.maxent_table_bits);
  detail::put_le<std::uint64_t>(out, m.shape.hash_seed);
  for (const auto* block : {&m.input_weights, &m.recurrent_weights, &m.node_vectors, &m.maxent})
    for (float x : *block) detail::put_le<float>(out, x);
  if (!out) throw IoError("error while writing model");
}

inline RnnlmModel read_model(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kModelMagic, 4) != 0)
    throw FormatError(0, "not an RNLM model file");
  if (detail::get_le<std::uint32_t>(in) != kModelVersion) throw FormatError(0, "unsupported model version");
  RnnlmShape s;
  s.hidden_size = detail::get_le<std::uint32_t>(in);
  s.vocab_size = detail::get_le<std::uint32_t>(in);
  s.maxent_order = detail::get_le<std::uint32_t>(in);
  s.maxent_table_bits = detail::get_le<std::uint32_t>(in);
  s.hash_seed = detail::get_le<std::uint64_t>(in);
  RnnlmModel m(s);
  for (auto* block : {&m.input_weights, &m.recurrent_weights, &m.node_vectors, &m.maxent})
    for (float& x : *block) x = detail::get_le<float>(in);
  return m;
}

}  // namespace otf
