#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <vector>

#include "otf_rnnlm/vocab.hpp"

// Direct interpolated Kneser-Ney, evaluated by recursion over raw counts in
// long double. Lower orders count distinct left extensions, except n-grams
// that start at the sentence start, which keep their raw counts.
class KnOracle {
 public:
  using Gram = std::vector<otf::WordId>;

  KnOracle(const otf::Corpus& corpus, const otf::Vocabulary& vocab, int order, bool kneser_ney = true,
           long double fixed_discount = -1)
      : order_(order), V_(vocab.size()), bos_(vocab.sentence_begin_id()) {
    std::vector<std::map<Gram, long double>> raw(order + 1);
    for (const auto& s : corpus) {
      Gram t{bos_};
      t.insert(t.end(), s.begin(), s.end());
      t.push_back(vocab.sentence_end_id());
      for (std::size_t j = 1; j < t.size(); ++j)
        for (int k = 1; k <= order && static_cast<std::size_t>(k) <= j + 1; ++k)
          raw[k][Gram(t.begin() + (j + 1 - k), t.begin() + j + 1)] += 1;
    }
    counts_.resize(order + 1);
    for (int k = 1; k <= order; ++k) {
      if (k == order || !kneser_ney) {
        counts_[k] = raw[k];
        continue;
      }
      std::map<Gram, std::set<otf::WordId>> left;
      for (const auto& [g, c] : raw[k + 1])
        if (g[1] != bos_) left[Gram(g.begin() + 1, g.end())].insert(g[0]);
      for (const auto& [g, ext] : left) counts_[k][g] = static_cast<long double>(ext.size());
      for (const auto& [g, c] : raw[k])
        if (g[0] == bos_) counts_[k][g] = c;
    }
    discount_.assign(order + 1, fixed_discount);
    for (int k = 1; k <= order; ++k) {
      if (fixed_discount >= 0) continue;
      long double n1 = 0, n2 = 0;
      for (const auto& [g, c] : counts_[k]) {
        n1 += c == 1;
        n2 += c == 2;
      }
      discount_[k] = (n1 > 0 && n2 > 0) ? n1 / (n1 + 2 * n2) : 0.5L;
    }
  }

  long double prob(Gram ctx, otf::WordId w) const {
    if (ctx.size() > static_cast<std::size_t>(order_ - 1)) ctx.erase(ctx.begin(), ctx.end() - (order_ - 1));
    return prob_k(ctx, w);
  }

  long double discount(int k) const { return discount_[k]; }

 private:
  long double prob_k(const Gram& ctx, otf::WordId w) const {
    const int k = static_cast<int>(ctx.size()) + 1;
    const auto& table = counts_[k];
    const long double d = discount_[k];
    long double sum = 0, types = 0, c = 0;
    for (const auto& [g, n] : table) {
      if (!std::equal(ctx.begin(), ctx.end(), g.begin())) continue;
      sum += n;
      types += 1;
      if (g.back() == w) c = n;
    }
    const long double lower =
        k == 1 ? 1.0L / static_cast<long double>(V_) : prob_k(Gram(ctx.begin() + 1, ctx.end()), w);
    if (sum == 0) return lower;
    return std::max(c - d, 0.0L) / sum + d * types / sum * lower;
  }

  int order_;
  std::size_t V_;
  otf::WordId bos_;
  std::vector<std::map<Gram, long double>> counts_;
  std::vector<long double> discount_;
};
