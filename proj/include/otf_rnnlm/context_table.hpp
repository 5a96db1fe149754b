#pragma once

#include <algorithm>
#include <bit>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "otf_rnnlm/error.hpp"
#include "otf_rnnlm/rnnlm.hpp"

namespace otf {

/// 8-byte handle for a stored context. Zero is the utterance-start context
/// and is never stored; stored contexts are numbered from one.
struct ContextIndex {
  std::uint64_t value = 0;

  constexpr bool is_start() const noexcept { return value == 0; }
  friend constexpr auto operator<=>(const ContextIndex&, const ContextIndex&) = default;
};

inline constexpr ContextIndex kStartContext{0};
inline constexpr std::uint64_t kEmptyHistorySlot = std::numeric_limits<std::uint64_t>::max();

/// Bytes of one serialized context: H f32 hidden values, maxent_order u64
/// word ids, u32 maxent_order, u32 self index.
constexpr std::size_t context_bytes(std::size_t hidden_size, std::size_t maxent_order) {
  return 4 * hidden_size + 8 * maxent_order + 4 + 4;
}

struct MemoryReport {
  std::size_t element_count = 0;
  std::size_t element_bytes = 0;
  std::size_t total_bytes = 0;        ///< element_count * element_bytes
  std::size_t bookkeeping_bytes = 0;  ///< reverse index, estimated
};

/// Bidirectional store between full contexts and ContextIndex values.
///
/// Contexts are kept serialized in one contiguous buffer. Equality is
/// bit-exact over everything but the trailing self-index field. The reverse
/// direction hashes those bytes and confirms candidates by comparison.
class IndexTable {
 public:
  IndexTable(std::size_t hidden_size, std::size_t maxent_order,
             std::uint64_t max_entries = std::numeric_limits<std::uint32_t>::max())
      : hidden_size_(hidden_size),
        maxent_order_(maxent_order),
        element_bytes_(context_bytes(hidden_size, maxent_order)),
        max_entries_(std::min<std::uint64_t>(max_entries, std::numeric_limits<std::uint32_t>::max())) {}

  std::size_t hidden_size() const noexcept { return hidden_size_; }
  std::size_t maxent_order() const noexcept { return maxent_order_; }
  std::size_t element_bytes() const noexcept { return element_bytes_; }
  std::size_t size() const noexcept { return count_; }
  bool empty() const noexcept { return count_ == 0; }

  /// Index of `ctx`, storing it at size()+1 if no identical context exists.
  ContextIndex encode(const RnnlmContext& ctx) {
    serialize_into(ctx, 0, scratch_);
    const auto key = content(std::span<const std::byte>(scratch_));
    const std::size_t h = std::hash<std::string_view>{}(as_view(key));
    if (auto found = lookup(key, h)) return *found;
    if (count_ >= max_entries_)
      throw OverflowError("IndexTable full at " + std::to_string(count_) + " entries");
    const ContextIndex idx{count_ + 1};
    write_u32(scratch_.data() + element_bytes_ - 4, static_cast<std::uint32_t>(idx.value));
    data_.insert(data_.end(), scratch_.begin(), scratch_.end());
    reverse_.emplace(h, idx.value);
    ++count_;
    return idx;
  }

  /// Index of `ctx` if stored.
  std::optional<ContextIndex> find(const RnnlmContext& ctx) const {
    std::vector<std::byte> buf;
    serialize_into(ctx, 0, buf);
    const auto key = content(std::span<const std::byte>(buf));
    return lookup(key, std::hash<std::string_view>{}(as_view(key)));
  }

  /// Stored context for `idx`; index 0 yields the zero context.
  RnnlmContext decode(ContextIndex idx) const {
    if (idx.is_start()) return RnnlmContext::zero(hidden_size_);
    return deserialize(element(idx));
  }

  /// Serialized bytes of a stored context.
  std::span<const std::byte> element(ContextIndex idx) const {
    if (idx.value == 0 || idx.value > count_)
      throw ProtocolError("unknown context index " + std::to_string(idx.value) + " (table holds " +
                          std::to_string(count_) + ")");
    return {data_.data() + (idx.value - 1) * element_bytes_, element_bytes_};
  }

  MemoryReport memory_report() const {
    MemoryReport r;
    r.element_count = count_;
    r.element_bytes = element_bytes_;
    r.total_bytes = count_ * element_bytes_;
    r.bookkeeping_bytes = reverse_.size() * (sizeof(std::size_t) + sizeof(std::uint64_t) + 2 * sizeof(void*)) +
                          reverse_.bucket_count() * sizeof(void*);
    return r;
  }

  void clear() {
    data_.clear();
    reverse_.clear();
    count_ = 0;
  }

  /// Serialized layout of `ctx` with the given self index, little-endian.
  std::vector<std::byte> serialize(const RnnlmContext& ctx, std::uint32_t self_index) const {
    std::vector<std::byte> out;
    serialize_into(ctx, self_index, out);
    return out;
  }

  RnnlmContext deserialize(std::span<const std::byte> bytes) const {
    if (bytes.size() != element_bytes_) throw FormatError(0, "serialized context has wrong size");
    RnnlmContext ctx;
    ctx.hidden.resize(hidden_size_);
    const std::byte* p = bytes.data();
    for (std::size_t i = 0; i < hidden_size_; ++i, p += 4) ctx.hidden[i] = std::bit_cast<float>(read_u32(p));
    for (std::size_t i = 0; i < maxent_order_; ++i, p += 8) {
      const std::uint64_t w = read_u64(p);
      if (w != kEmptyHistorySlot) ctx.history.push_back(static_cast<WordId>(w));
    }
    return ctx;
  }

 private:
  static std::string_view as_view(std::span<const std::byte> s) {
    return {reinterpret_cast<const char*>(s.data()), s.size()};
  }
  std::span<const std::byte> content(std::span<const std::byte> element) const {
    return element.first(element_bytes_ - 4);
  }

  std::optional<ContextIndex> lookup(std::span<const std::byte> key, std::size_t h) const {
    auto [lo, hi] = reverse_.equal_range(h);
    for (auto it = lo; it != hi; ++it) {
      const auto stored = content(element(ContextIndex{it->second}));
      if (std::memcmp(stored.data(), key.data(), key.size()) == 0) return ContextIndex{it->second};
    }
    return std::nullopt;
  }

  void serialize_into(const RnnlmContext& ctx, std::uint32_t self_index, std::vector<std::byte>& out) const {
    if (ctx.hidden.size() != hidden_size_) throw RangeError("context hidden size does not match table");
    if (ctx.history.size() > maxent_order_) throw RangeError("context history longer than table order");
    out.resize(element_bytes_);
    std::byte* p = out.data();
    for (float x : ctx.hidden) {
      write_u32(p, std::bit_cast<std::uint32_t>(x));
      p += 4;
    }
    for (std::size_t i = 0; i < maxent_order_; ++i, p += 8)
      write_u64(p, i < ctx.history.size() ? std::uint64_t{ctx.history[i]} : kEmptyHistorySlot);
    write_u32(p, static_cast<std::uint32_t>(maxent_order_));
    write_u32(p + 4, self_index);
  }

  static void write_u32(std::byte* p, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) p[i] = static_cast<std::byte>((v >> (8 * i)) & 0xff);
  }
  static void write_u64(std::byte* p, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) p[i] = static_cast<std::byte>((v >> (8 * i)) & 0xff);
  }
  static std::uint32_t read_u32(const std::byte* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{std::to_integer<std::uint8_t>(p[i])} << (8 * i);
    return v;
  }
  static std::uint64_t read_u64(const std::byte* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{std::to_integer<std::uint8_t>(p[i])} << (8 * i);
    return v;
  }

  std::size_t hidden_size_;
  std::size_t maxent_order_;
  std::size_t element_bytes_;
  std::uint64_t max_entries_;
  std::size_t count_ = 0;
  std::vector<std::byte> data_;
  std::unordered_multimap<std::size_t, std::uint64_t> reverse_;
  std::vector<std::byte> scratch_;
};

}  // namespace otf
