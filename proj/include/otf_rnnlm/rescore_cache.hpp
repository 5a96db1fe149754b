#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include "otf_rnnlm/context_table.hpp"
#include "otf_rnnlm/huffman.hpp"
#include "otf_rnnlm/rnnlm.hpp"

namespace otf {

/// Cache key: context index and the word being scored.
struct CacheKey {
  ContextIndex context;
  WordId word = 0;
  friend constexpr auto operator<=>(const CacheKey&, const CacheKey&) = default;
};

struct CacheKeyHash {
  std::size_t operator()(const CacheKey& k) const noexcept {
    return static_cast<std::size_t>(MaxentHash::mix(k.context.value * 0x9E3779B97F4A7C15ull ^ k.word));
  }
};

/// Cache value: ln P(word | context) and the index of the successor context.
struct CacheValue {
  double logprob = 0;
  ContextIndex next;
  friend bool operator==(const CacheValue&, const CacheValue&) = default;
};

/// Four 8-byte integers per entry: key (context, word), value (prob, next).
inline constexpr std::uint64_t kCacheEntryBytes = 32;

struct CacheStats {
  std::uint64_t lookups = 0;
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  std::uint64_t evictions = 0;
  std::uint64_t entries = 0;
  std::uint64_t resident_bytes = 0;

  double hit_ratio() const { return lookups ? static_cast<double>(hits) / static_cast<double>(lookups) : 0.0; }

  std::string to_line() const {
    std::ostringstream out;
    out << "lookups=" << lookups << " hits=" << hits << " hit_ratio=" << hit_ratio()
        << " resident_bytes=" << resident_bytes << " evictions=" << evictions;
    return out.str();
  }
};

/// Memo of (context, word) -> (logprob, next context).
///
/// Capacity is in bytes at kCacheEntryBytes per entry; zero means unbounded.
/// When full, the entry with the lowest use count goes first, the least
/// recently used among equals. Use counts never decay.
class ResultCache {
 public:
  explicit ResultCache(std::uint64_t capacity_bytes = 0) { set_capacity(capacity_bytes); }

  void set_capacity(std::uint64_t capacity_bytes) {
    capacity_bytes_ = capacity_bytes;
    if (capacity_bytes_ > 0)
      while (map_.size() > max_entries()) evict_one();
  }
  std::uint64_t capacity_bytes() const noexcept { return capacity_bytes_; }

  /// A disabled cache misses every lookup and stores nothing.
  void set_enabled(bool on) {
    enabled_ = on;
    if (!on) clear();
  }
  bool enabled() const noexcept { return enabled_; }

  std::optional<CacheValue> lookup(const CacheKey& key) {
    ++current_.lookups;
    auto it = enabled_ ? map_.find(key) : map_.end();
    if (it == map_.end()) {
      ++current_.misses;
      return std::nullopt;
    }
    ++current_.hits;
    touch(it);
    return it->second.value;
  }

  void insert(const CacheKey& key, const CacheValue& value) {
    if (!enabled_) return;
    if (auto it = map_.find(key); it != map_.end()) {
      it->second.value = value;
      touch(it);
      return;
    }
    if (capacity_bytes_ > 0) {
      if (max_entries() == 0) return;
      while (map_.size() >= max_entries()) evict_one();
    }
    Slot slot{value, 1, ++tick_};
    order_.emplace(slot.uses, slot.last_use, key);
    map_.emplace(key, slot);
  }

  bool contains(const CacheKey& key) const { return map_.count(key) != 0; }
  std::size_t size() const noexcept { return map_.size(); }
  std::uint64_t resident_bytes() const noexcept { return map_.size() * kCacheEntryBytes; }

  /// Use count of a resident entry, 0 if absent.
  std::uint64_t uses(const CacheKey& key) const {
    auto it = map_.find(key);
    return it == map_.end() ? 0 : it->second.uses;
  }

  /// Called with (victim key, victim uses, lowest use count among the
  /// remaining entries) on every eviction; for instrumentation.
  template <class F>
  void on_evict(F&& f) {
    evict_hook_ = std::forward<F>(f);
  }

  void clear() {
    map_.clear();
    order_.clear();
  }

  /// Folds the current utterance's counters into the cumulative ones.
  void roll_utterance() {
    rolled_.lookups += current_.lookups;
    rolled_.hits += current_.hits;
    rolled_.misses += current_.misses;
    rolled_.evictions += current_.evictions;
    current_ = {};
  }

  /// Counters since the last roll_utterance(), plus current residency.
  CacheStats stats() const {
    CacheStats s = current_;
    s.entries = map_.size();
    s.resident_bytes = resident_bytes();
    return s;
  }

  CacheStats cumulative_stats() const {
    CacheStats s = stats();
    s.lookups += rolled_.lookups;
    s.hits += rolled_.hits;
    s.misses += rolled_.misses;
    s.evictions += rolled_.evictions;
    return s;
  }

 private:
  struct Slot {
    CacheValue value;
    std::uint64_t uses;
    std::uint64_t last_use;
  };
  using Map = std::unordered_map<CacheKey, Slot, CacheKeyHash>;

  std::uint64_t max_entries() const noexcept { return capacity_bytes_ / kCacheEntryBytes; }

  void touch(Map::iterator it) {
    order_.erase({it->second.uses, it->second.last_use, it->first});
    ++it->second.uses;
    it->second.last_use = ++tick_;
    order_.emplace(it->second.uses, it->second.last_use, it->first);
  }

  void evict_one() {
    auto victim = order_.begin();
    const auto [uses, last, key] = *victim;
    order_.erase(victim);
    map_.erase(key);
    ++current_.evictions;
    if (evict_hook_) evict_hook_(key, uses, order_.empty() ? uses : std::get<0>(*order_.begin()));
  }

  std::uint64_t capacity_bytes_ = 0;
  bool enabled_ = true;
  std::uint64_t tick_ = 0;
  Map map_;
  std::set<std::tuple<std::uint64_t, std::uint64_t, CacheKey>> order_;
  CacheStats current_;
  CacheStats rolled_;
  std::function<void(const CacheKey&, std::uint64_t, std::uint64_t)> evict_hook_;
};

/// Uncached RNNLM evaluation with a call counter.
class RnnlmScorer {
 public:
  RnnlmScorer(const RnnlmModel& model, const HuffmanTree& tree) : model_(&model), tree_(&tree) {
    if (tree.leaf_count() != model.vocab_size()) throw RangeError("tree and model vocabularies differ");
  }

  std::pair<double, RnnlmContext> compute(WordId w, const RnnlmContext& ctx) {
    ++calls_;
    return compute_rnnlm(*model_, *tree_, w, ctx);
  }

  std::uint64_t compute_calls() const noexcept { return calls_; }
  const RnnlmModel& model() const noexcept { return *model_; }
  const HuffmanTree& tree() const noexcept { return *tree_; }

 private:
  const RnnlmModel* model_;
  const HuffmanTree* tree_;
  std::uint64_t calls_ = 0;
};

/// Cached probability lookup:
///   on a hit, return the stored (p, c');
///   otherwise decode c, run the RNNLM step, map the successor context to an
///   index (reusing an identical stored one), cache and return (p, c').
inline CacheValue rnnlm_prob(ResultCache& cache, IndexTable& table, RnnlmScorer& scorer, WordId w,
                             ContextIndex c) {
  const CacheKey key{c, w};
  if (auto hit = cache.lookup(key)) return *hit;
  const RnnlmContext ctx = table.decode(c);
  auto [p, next] = scorer.compute(w, ctx);
  const CacheValue out{p, table.encode(next)};
  cache.insert(key, out);
  return out;
}

/// End-of-utterance policy. Without retention both the cache and the table
/// are emptied; with it both are kept. Counters roll over either way.
inline void reset_utterance(ResultCache& cache, IndexTable& table, bool retain) {
  if (!retain) {
    cache.clear();
    table.clear();
  }
  cache.roll_utterance();
}

}  // namespace otf
