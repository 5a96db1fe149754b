#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "otf_rnnlm/context_table.hpp"
#include "otf_rnnlm/huffman.hpp"
#include "otf_rnnlm/lattice.hpp"
#include "otf_rnnlm/ngram.hpp"
#include "otf_rnnlm/rescore_cache.hpp"
#include "otf_rnnlm/rnnlm.hpp"
#include "otf_rnnlm/transfer_codec.hpp"

namespace otf {

/// Interned small-LM histories; the index is what travels in the low half of
/// a packed request.
class SmallLmStates {
 public:
  std::uint64_t intern(const std::vector<WordId>& hist) {
    auto [it, fresh] = ids_.try_emplace(hist, histories_.size());
    if (fresh) histories_.push_back(hist);
    return it->second;
  }
  const std::vector<WordId>& history(std::uint64_t id) const {
    if (id >= histories_.size()) throw ProtocolError("unknown small-LM state " + std::to_string(id));
    return histories_[id];
  }
  std::size_t size() const noexcept { return histories_.size(); }

 private:
  std::map<std::vector<WordId>, std::uint64_t> ids_;
  std::vector<std::vector<WordId>> histories_;
};

/// The host side of the rescoring boundary for one decoding stream: owns
/// the context table, the result cache and the byte ledger, and answers
/// encoded requests with encoded responses.
class RescoreServer {
 public:
  RescoreServer(const RnnlmModel& model, const HuffmanTree& tree, const NgramModel& small_lm,
                WordId sentence_begin, unsigned rnn_bits = kDefaultRnnBits)
      : small_lm_(&small_lm),
        rnn_bits_(rnn_bits),
        table_(model.hidden_size(), model.maxent_order(),
               std::min<std::uint64_t>(std::numeric_limits<std::uint32_t>::max(),
                                       (std::uint64_t{1} << std::min(rnn_bits, 63u)) - 1)),
        scorer_(model, tree),
        ledger_(context_bytes(model.hidden_size(), model.maxent_order())) {
    std::vector<WordId> start{sentence_begin};
    trim(start);
    start_state_ = states_.intern(start);
  }

  /// Packed indices of the utterance-start token.
  std::uint64_t initial_packed() const { return pack(kStartContext.value, start_state_, rnn_bits_); }
  unsigned rnn_bits() const noexcept { return rnn_bits_; }

  Message handle(const Message& raw) {
    const RescoreRequest req = RescoreRequest::decode(raw);
    const auto [c, s] = unpack(req.packed, rnn_bits_);
    const CacheValue v = rnnlm_prob(cache_, table_, scorer_, req.word, ContextIndex{c});
    const auto& hist = states_.history(s);
    const double q = small_lm_->logprob(hist, req.word);
    std::vector<WordId> next_hist = hist;
    next_hist.push_back(req.word);
    trim(next_hist);
    const std::uint64_t next_state = states_.intern(next_hist);
    ledger_.record_exchange();
    return RescoreResponse{static_cast<float>(v.logprob - q), pack(v.next.value, next_state, rnn_bits_)}.encode();
  }

  void reset_utterance(bool retain) { otf::reset_utterance(cache_, table_, retain); }

  ResultCache& cache() noexcept { return cache_; }
  const ResultCache& cache() const noexcept { return cache_; }
  const IndexTable& table() const noexcept { return table_; }
  const RnnlmScorer& scorer() const noexcept { return scorer_; }
  const TransferLedger& ledger() const noexcept { return ledger_; }

 private:
  void trim(std::vector<WordId>& h) const {
    const std::size_t keep = static_cast<std::size_t>(std::max(small_lm_->order() - 1, 0));
    if (h.size() > keep) h.erase(h.begin(), h.end() - static_cast<std::ptrdiff_t>(keep));
  }

  const NgramModel* small_lm_;
  unsigned rnn_bits_;
  IndexTable table_;
  ResultCache cache_;
  RnnlmScorer scorer_;
  TransferLedger ledger_;
  SmallLmStates states_;
  std::uint64_t start_state_ = 0;
};

struct PathHypothesis {
  std::vector<std::size_t> arcs;
  std::vector<WordId> words;  ///< arc words, ending in `</s>` for generated lattices
  double acoustic = 0;
  double lm = 0;
  double combined = 0;  ///< acoustic + lm_weight * lm
  ContextIndex context;  ///< RNNLM context after the last word (on-the-fly only)
};

struct DecodeOptions {
  double lm_weight = 1.0;
  std::size_t beam = 16;  ///< tokens kept per lattice node
};

struct OnTheFlyResult {
  PathHypothesis best;
  std::uint64_t expansions = 0;  ///< (token, arc) pairs expanded after pruning
  TransferLedger transfer;       ///< this utterance's traffic
  CacheStats cache;              ///< this utterance's cache counters
  std::uint64_t compute_calls = 0;
};

/// Frame-synchronous token passing over `lat` with RNNLM scores substituted
/// through `server`.
///
/// Tokens meeting at a node with the same RNNLM context index are merged,
/// keeping the higher score. Each node keeps its `beam` best tokens, and
/// every surviving token sends one request per outgoing arc; the arc's LM
/// score becomes smalllm + delta.
inline OnTheFlyResult rescore_onthefly(const Lattice& lat, RescoreServer& server, const DecodeOptions& opt) {
  if (opt.beam < 1) throw RangeError("beam must be >= 1");
  struct Token {
    double score;
    double acoustic;
    double lm;
    std::uint64_t packed;
    std::int64_t parent;
    std::size_t arc;
  };
  const TransferLedger ledger_before = server.ledger();
  const std::uint64_t calls_before = server.scorer().compute_calls();

  std::vector<Token> tokens{{0.0, 0.0, 0.0, server.initial_packed(), -1, 0}};
  std::vector<std::unordered_map<std::uint64_t, std::size_t>> active(lat.node_count());
  active[lat.start()].emplace(unpack(tokens[0].packed, server.rnn_bits()).rnnlm_index, 0);

  OnTheFlyResult result;
  std::int64_t best = -1;
  std::vector<std::size_t> alive;
  for (NodeId n : lat.order()) {
    alive.clear();
    for (const auto& [ctx, t] : active[n]) alive.push_back(t);
    active[n].clear();
    if (alive.empty()) continue;
    std::sort(alive.begin(), alive.end(), [&](std::size_t a, std::size_t b) {
      return tokens[a].score != tokens[b].score ? tokens[a].score > tokens[b].score : a < b;
    });
    if (alive.size() > opt.beam) alive.resize(opt.beam);
    if (lat.is_final(n) && (best < 0 || tokens[alive[0]].score > tokens[static_cast<std::size_t>(best)].score))
      best = static_cast<std::int64_t>(alive[0]);
    for (std::size_t t : alive) {
      for (std::size_t a : lat.out_arcs(n)) {
        const LatticeArc& arc = lat.arc(a);
        const RescoreRequest req{tokens[t].packed, arc.word, static_cast<std::uint32_t>(lat.time(arc.to))};
        const RescoreResponse resp = RescoreResponse::decode(server.handle(req.encode()));
        ++result.expansions;
        const double lm = arc.smalllm + static_cast<double>(resp.delta);
        const double score = tokens[t].score + arc.acoustic + opt.lm_weight * lm;
        const std::uint64_t key = unpack(resp.next_packed, server.rnn_bits()).rnnlm_index;
        auto& bucket = active[arc.to];
        auto it = bucket.find(key);
        if (it != bucket.end() && tokens[it->second].score >= score) continue;
        tokens.push_back({score, tokens[t].acoustic + arc.acoustic, tokens[t].lm + lm, resp.next_packed,
                          static_cast<std::int64_t>(t), a});
        if (it != bucket.end())
          it->second = tokens.size() - 1;
        else
          bucket.emplace(key, tokens.size() - 1);
      }
    }
  }
  if (best < 0) throw Error("no token reached a final node");

  const Token& win = tokens[static_cast<std::size_t>(best)];
  for (std::int64_t t = best; tokens[static_cast<std::size_t>(t)].parent >= 0; t = tokens[static_cast<std::size_t>(t)].parent)
    result.best.arcs.push_back(tokens[static_cast<std::size_t>(t)].arc);
  std::reverse(result.best.arcs.begin(), result.best.arcs.end());
  for (std::size_t a : result.best.arcs) result.best.words.push_back(lat.arc(a).word);
  result.best.acoustic = win.acoustic;
  result.best.lm = win.lm;
  result.best.combined = win.acoustic + opt.lm_weight * win.lm;
  result.best.context = ContextIndex{unpack(win.packed, server.rnn_bits()).rnnlm_index};

  const TransferLedger& after = server.ledger();
  result.transfer = TransferLedger(after.context_bytes);
  result.transfer.requests = after.requests - ledger_before.requests;
  result.transfer.bytes_indexed = after.bytes_indexed - ledger_before.bytes_indexed;
  result.transfer.bytes_full_baseline = after.bytes_full_baseline - ledger_before.bytes_full_baseline;
  result.cache = server.cache().stats();
  result.compute_calls = server.scorer().compute_calls() - calls_before;
  return result;
}

/// Top `n` distinct word sequences by first-pass score
/// acoustic + lm_weight * smalllm, best first.
inline std::vector<PathHypothesis> nbest(const Lattice& lat, std::size_t n, double lm_weight = 1.0) {
  if (n < 1) throw RangeError("n must be >= 1");
  auto better = [](const PathHypothesis& a, const PathHypothesis& b) {
    return a.combined != b.combined ? a.combined > b.combined : a.words < b.words;
  };
  auto prune = [&](std::vector<PathHypothesis>& list) {
    std::sort(list.begin(), list.end(), [&](const auto& a, const auto& b) {
      return a.words != b.words ? a.words < b.words : better(a, b);
    });
    list.erase(std::unique(list.begin(), list.end(), [](const auto& a, const auto& b) { return a.words == b.words; }),
               list.end());
    std::sort(list.begin(), list.end(), better);
    if (list.size() > n) list.resize(n);
  };

  std::vector<std::vector<PathHypothesis>> partial(lat.node_count());
  partial[lat.start()].push_back({});
  std::vector<PathHypothesis> done;
  for (NodeId node : lat.order()) {
    auto& here = partial[node];
    if (here.empty()) continue;
    prune(here);
    if (lat.is_final(node)) done.insert(done.end(), here.begin(), here.end());
    for (const auto& h : here) {
      for (std::size_t a : lat.out_arcs(node)) {
        const LatticeArc& arc = lat.arc(a);
        PathHypothesis e = h;
        e.arcs.push_back(a);
        e.words.push_back(arc.word);
        e.acoustic += arc.acoustic;
        e.lm += arc.smalllm;
        e.combined = e.acoustic + lm_weight * e.lm;
        partial[arc.to].push_back(std::move(e));
      }
    }
    here.clear();
    here.shrink_to_fit();
  }
  prune(done);
  return done;
}

enum class TwoPassMode { rnnlm, hybrid };

/// Re-ranks `hyps` with a second-pass LM score:
///   rnnlm:  ln P_rnn(words)
///   hybrid: Σ ln(λ P_ngram(w|h) + (1-λ) P_rnn(w|h)), λ = interp_weight.
/// Returns the winner with lm and combined replaced; earlier entries win ties.
inline PathHypothesis rescore_twopass(const std::vector<PathHypothesis>& hyps, TwoPassMode mode,
                                      const RnnlmModel& model, const HuffmanTree& tree, const NgramModel& ngram,
                                      WordId sentence_begin, double interp_weight, double lm_weight = 1.0) {
  if (hyps.empty()) throw EmptyInputError("empty hypothesis list");
  if (interp_weight < 0.0 || interp_weight > 1.0) throw RangeError("interp_weight must be in [0,1]");
  PathHypothesis best;
  bool have = false;
  for (const auto& h : hyps) {
    double lm = 0;
    if (mode == TwoPassMode::rnnlm) {
      lm = sequence_logprob(model, tree, std::span<const WordId>(h.words));
    } else {
      auto ctx = RnnlmContext::zero(model.hidden_size());
      std::vector<WordId> hist{sentence_begin};
      for (WordId w : h.words) {
        const double pr = word_logprob(model, tree, ctx, w);
        const double pn = ngram.logprob(hist, w);
        if (interp_weight == 1.0)
          lm += pn;
        else if (interp_weight == 0.0)
          lm += pr;
        else {
          const double a = std::log(interp_weight) + pn;
          const double b = std::log1p(-interp_weight) + pr;
          const double m = std::max(a, b);
          lm += m + std::log(std::exp(a - m) + std::exp(b - m));
        }
        ctx = advance_context(model, ctx, w);
        hist.push_back(w);
      }
    }
    const double combined = h.acoustic + lm_weight * lm;
    if (!have || combined > best.combined) {
      best = h;
      best.lm = lm;
      best.combined = combined;
      have = true;
    }
  }
  return best;
}

/// acoustic + lm_weight * ln P_rnn(words): the objective on-the-fly
/// rescoring maximizes.
inline double rescored_score(const PathHypothesis& h, const RnnlmModel& model, const HuffmanTree& tree,
                             double lm_weight = 1.0) {
  return h.acoustic + lm_weight * sequence_logprob(model, tree, std::span<const WordId>(h.words));
}

/// Levenshtein distance between word sequences.
inline std::size_t word_errors(std::span<const WordId> hyp, std::span<const WordId> ref) {
  std::vector<std::size_t> prev(ref.size() + 1), cur(ref.size() + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= hyp.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= ref.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (hyp[i - 1] == ref[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[ref.size()];
}

/// Hypothesis words without a trailing `</s>`.
inline std::span<const WordId> strip_sentence_end(std::span<const WordId> words, WordId eos) {
  return (!words.empty() && words.back() == eos) ? words.first(words.size() - 1) : words;
}

}  // namespace otf
