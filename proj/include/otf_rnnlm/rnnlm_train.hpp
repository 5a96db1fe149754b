#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "otf_rnnlm/error.hpp"
#include "otf_rnnlm/rnnlm.hpp"

namespace otf {

/// Gradient of -Σ ln P over one sentence. Only touched rows are stored.
struct RnnlmGradient {
  std::unordered_map<WordId, std::vector<double>> input;
  std::vector<double> recurrent;
  std::unordered_map<std::uint32_t, std::vector<double>> nodes;
  std::unordered_map<std::uint64_t, double> maxent;
  double loss = 0;
  std::size_t tokens = 0;
};

/// Forward and backward pass over `words` (which should end in `</s>`),
/// starting from the zero context.
///
/// Each prediction's error is propagated back through at most `bptt_steps`
/// recurrent steps; with bptt_steps >= words.size() the result is the exact
/// gradient of the sentence loss.
template <class Real>
RnnlmGradient sentence_gradient(const BasicRnnlmModel<Real>& m, const HuffmanTree& tree,
                                std::span<const WordId> words, std::size_t bptt_steps) {
  const std::size_t H = m.hidden_size();
  const std::size_t T = words.size();
  std::vector<BasicRnnlmContext<Real>> ctx;
  ctx.reserve(T + 1);
  ctx.push_back(BasicRnnlmContext<Real>::zero(H));
  for (std::size_t t = 0; t < T; ++t) ctx.push_back(advance_context(m, ctx[t], words[t]));

  RnnlmGradient g;
  g.recurrent.assign(H * H, 0.0);
  g.tokens = T;
  std::vector<double> dh(H), dz(H), next(H);
  for (std::size_t t = 0; t < T; ++t) {
    const auto& h = ctx[t].hidden;
    const auto features = active_features(m, ctx[t].history);
    std::fill(dh.begin(), dh.end(), 0.0);
    for (const PathStep& step : tree.path(words[t])) {
      const double a = node_activation(m, std::span<const Real>(h), features, step.node);
      const double s = step.bit == 0 ? 1.0 : -1.0;
      g.loss -= detail::log_sigmoid(s * a);
      const double da = s * (detail::sigmoid(s * a) - 1.0);
      auto& gn = g.nodes[step.node];
      if (gn.empty()) gn.assign(H, 0.0);
      const auto v = m.node_row(step.node);
      for (std::size_t i = 0; i < H; ++i) {
        gn[i] += da * h[i];
        dh[i] += da * v[i];
      }
      for (std::size_t k = 0; k < features.count; ++k)
        g.maxent[MaxentHash::slot(features.bases[k], step.node, m.maxent_mask())] += da;
    }
    // hidden[s] was produced from hidden[s-1] by consuming words[s-1]
    for (std::size_t s = t, steps = 0; s >= 1 && steps < bptt_steps; --s, ++steps) {
      const auto& hs = ctx[s].hidden;
      const auto& hp = ctx[s - 1].hidden;
      for (std::size_t i = 0; i < H; ++i) dz[i] = dh[i] * hs[i] * (1.0 - hs[i]);
      auto& gi = g.input[words[s - 1]];
      if (gi.empty()) gi.assign(H, 0.0);
      std::fill(next.begin(), next.end(), 0.0);
      for (std::size_t i = 0; i < H; ++i) {
        gi[i] += dz[i];
        const Real* row = m.recurrent_weights.data() + i * H;
        double* grow = g.recurrent.data() + i * H;
        for (std::size_t j = 0; j < H; ++j) {
          grow[j] += dz[i] * hp[j];
          next[j] += dz[i] * row[j];
        }
      }
      dh.swap(next);
    }
  }
  return g;
}

/// w -= learn_rate * g for every touched weight.
template <class Real>
void apply_gradient(BasicRnnlmModel<Real>& m, const RnnlmGradient& g, double learn_rate) {
  const std::size_t H = m.hidden_size();
  auto step = [learn_rate](Real& w, double d) { w = static_cast<Real>(w - learn_rate * d); };
  for (const auto& [word, row] : g.input)
    for (std::size_t i = 0; i < H; ++i) step(m.input_weights[std::size_t{word} * H + i], row[i]);
  for (std::size_t i = 0; i < g.recurrent.size(); ++i) step(m.recurrent_weights[i], g.recurrent[i]);
  for (const auto& [node, row] : g.nodes)
    for (std::size_t i = 0; i < H; ++i) step(m.node_vectors[std::size_t{node} * H + i], row[i]);
  for (const auto& [slot, d] : g.maxent) step(m.maxent[slot], d);
}

struct TrainOptions {
  int epochs = 10;
  double learn_rate = 0.1;
  std::size_t bptt_steps = 1;
};

struct EpochLog {
  int epoch;
  double train_perplexity;
  double valid_perplexity;  ///< NaN without a validation corpus
};

/// Plain SGD, one update per sentence, sentences in corpus order. After each
/// epoch the training (and validation, if given) perplexity is measured with
/// the updated weights.
template <class Real>
std::vector<EpochLog> train(BasicRnnlmModel<Real>& m, const HuffmanTree& tree, const Corpus& corpus,
                            const Corpus* valid, WordId eos, const TrainOptions& opt) {
  if (corpus.empty()) throw EmptyInputError("empty training corpus");
  if (!(opt.learn_rate >= 0.0)) throw RangeError("learn rate must be non-negative");
  if (opt.bptt_steps < 1) throw RangeError("bptt_steps must be >= 1");
  std::vector<EpochLog> log;
  std::vector<WordId> words;
  for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
    for (const auto& s : corpus) {
      words.assign(s.begin(), s.end());
      words.push_back(eos);
      auto g = sentence_gradient(m, tree, words, opt.bptt_steps);
      if (!std::isfinite(g.loss))
        throw DivergenceError(epoch, "non-finite loss in epoch " + std::to_string(epoch));
      apply_gradient(m, g, opt.learn_rate);
    }
    if (!m.all_finite())
      throw DivergenceError(epoch, "non-finite weights after epoch " + std::to_string(epoch));
    EpochLog e{epoch, rnnlm_perplexity(m, tree, corpus, eos),
               std::numeric_limits<double>::quiet_NaN()};
    if (valid && !valid->empty()) e.valid_perplexity = rnnlm_perplexity(m, tree, *valid, eos);
    if (!std::isfinite(e.train_perplexity))
      throw DivergenceError(epoch, "non-finite perplexity in epoch " + std::to_string(epoch));
    log.push_back(e);
  }
  return log;
}

}  // namespace otf
