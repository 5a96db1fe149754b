#pragma once

#include <cstdint>
#include <queue>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "otf_rnnlm/error.hpp"
#include "otf_rnnlm/vocab.hpp"

namespace otf {

/// One decision on the way from the root to a leaf.
struct PathStep {
  std::uint32_t node;  ///< internal node id, 0..n-2 in creation order
  std::uint8_t bit;    ///< 0 = first-merged child, 1 = second

  friend bool operator==(const PathStep&, const PathStep&) = default;
};

/// Binary code tree over word ids for the hierarchical softmax output layer.
///
/// Leaves are word ids 0..n-1. Internal nodes are numbered in merge order, so
/// the root is node n-2. Child references below n name leaves; references
/// n+k name internal node k.
class HuffmanTree {
 public:
  struct Node {
    std::uint32_t child[2];
  };

  std::size_t leaf_count() const noexcept { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  std::size_t internal_count() const noexcept { return nodes_.size(); }
  const std::vector<Node>& nodes() const noexcept { return nodes_; }
  std::uint32_t root() const noexcept { return static_cast<std::uint32_t>(nodes_.size() - 1); }

  /// Root-to-leaf decisions for `word`.
  std::span<const PathStep> path(WordId word) const {
    if (word >= leaf_count())
      throw RangeError("word id " + std::to_string(word) + " outside tree of " +
                       std::to_string(leaf_count()) + " leaves");
    return {steps_.data() + offsets_[word], steps_.data() + offsets_[word + 1]};
  }

  std::size_t path_length(WordId word) const { return path(word).size(); }

  /// Σ counts[w]·len(path(w)).
  std::uint64_t weighted_length(std::span<const std::uint64_t> counts) const {
    std::uint64_t total = 0;
    for (std::size_t w = 0; w < counts.size() && w < leaf_count(); ++w)
      total += counts[w] * path_length(static_cast<WordId>(w));
    return total;
  }

  friend HuffmanTree build_huffman(std::span<const std::uint64_t> counts);

 private:
  std::vector<Node> nodes_;
  std::vector<PathStep> steps_;
  std::vector<std::size_t> offsets_;
};

/// Huffman merge over `counts`. Equal weights are resolved by the smaller
/// node key, where leaves keep their word id as key and the k-th internal
/// node gets key n+k; the smaller key becomes child 0.
inline HuffmanTree build_huffman(std::span<const std::uint64_t> counts) {
  const std::size_t n = counts.size();
  if (n < 2) throw RangeError("a code tree needs at least 2 words");

  using Item = std::tuple<std::uint64_t, std::uint32_t>;  // weight, key
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  for (std::size_t i = 0; i < n; ++i) heap.emplace(counts[i], static_cast<std::uint32_t>(i));

  HuffmanTree tree;
  tree.nodes_.reserve(n - 1);
  // parent of every key, and which branch leads to it
  std::vector<std::uint32_t> parent(2 * n - 1, 0);
  std::vector<std::uint8_t> branch(2 * n - 1, 0);
  while (heap.size() > 1) {
    auto [w0, k0] = heap.top();
    heap.pop();
    auto [w1, k1] = heap.top();
    heap.pop();
    const auto id = static_cast<std::uint32_t>(tree.nodes_.size());
    tree.nodes_.push_back({{k0, k1}});
    parent[k0] = id;
    branch[k0] = 0;
    parent[k1] = id;
    branch[k1] = 1;
    heap.emplace(w0 + w1, static_cast<std::uint32_t>(n) + id);
  }

  const auto root_key = static_cast<std::uint32_t>(2 * n - 2);
  tree.offsets_.assign(n + 1, 0);
  std::vector<PathStep> rev;
  for (std::size_t leaf = 0; leaf < n; ++leaf) {
    rev.clear();
    for (std::uint32_t key = static_cast<std::uint32_t>(leaf); key != root_key;
         key = static_cast<std::uint32_t>(n) + parent[key])
      rev.push_back({parent[key], branch[key]});
    tree.steps_.insert(tree.steps_.end(), rev.rbegin(), rev.rend());
    tree.offsets_[leaf + 1] = tree.steps_.size();
  }
  return tree;
}

inline HuffmanTree build_huffman(const Vocabulary& vocab) {
  return build_huffman(std::span<const std::uint64_t>(vocab.counts()));
}

/// Same as tree.path(word); kept as a free function for symmetry with the
/// other operations.
inline std::span<const PathStep> leaf_path(const HuffmanTree& tree, WordId word) {
  return tree.path(word);
}

}  // namespace otf
