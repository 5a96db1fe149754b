#pragma once

#include <array>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <string>

#include "otf_rnnlm/error.hpp"
#include "otf_rnnlm/vocab.hpp"

namespace otf {

inline constexpr unsigned kDefaultRnnBits = 32;

/// RNNLM context index in the high `rnn_bits`, small-LM state index in the
/// low 64 - rnn_bits.
inline std::uint64_t pack(std::uint64_t rnnlm_index, std::uint64_t smalllm_index,
                          unsigned rnn_bits = kDefaultRnnBits) {
  if (rnn_bits < 1 || rnn_bits > 63) throw RangeError("rnn_bits must be in 1..63");
  const unsigned small_bits = 64 - rnn_bits;
  if (rnnlm_index >> rnn_bits)
    throw OverflowError("rnnlm_index " + std::to_string(rnnlm_index) + " exceeds " +
                        std::to_string(rnn_bits) + " bits");
  if (smalllm_index >> small_bits)
    throw OverflowError("smalllm_index " + std::to_string(smalllm_index) + " exceeds " +
                        std::to_string(small_bits) + " bits");
  return (rnnlm_index << small_bits) | smalllm_index;
}

struct UnpackedIndices {
  std::uint64_t rnnlm_index;
  std::uint64_t smalllm_index;
  friend bool operator==(const UnpackedIndices&, const UnpackedIndices&) = default;
};

inline UnpackedIndices unpack(std::uint64_t value, unsigned rnn_bits = kDefaultRnnBits) {
  if (rnn_bits < 1 || rnn_bits > 63) throw RangeError("rnn_bits must be in 1..63");
  const unsigned small_bits = 64 - rnn_bits;
  return {value >> small_bits, value & ((std::uint64_t{1} << small_bits) - 1)};
}

// Wire messages, little-endian, 16 bytes each.
//   request:  u64 packed | u32 word | u32 frame
//   response: f32 delta  | u64 next_packed | 4 zero bytes
inline constexpr std::size_t kMessageBytes = 16;
using Message = std::array<std::byte, kMessageBytes>;

namespace detail {
template <class U>
void store_le(std::byte* p, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) p[i] = static_cast<std::byte>((v >> (8 * i)) & 0xff);
}
template <class U>
U load_le(const std::byte* p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(std::to_integer<std::uint8_t>(p[i])) << (8 * i);
  return v;
}
}  // namespace detail

struct RescoreRequest {
  std::uint64_t packed = 0;
  WordId word = 0;
  std::uint32_t frame = 0;

  Message encode() const {
    Message m{};
    detail::store_le<std::uint64_t>(m.data(), packed);
    detail::store_le<std::uint32_t>(m.data() + 8, word);
    detail::store_le<std::uint32_t>(m.data() + 12, frame);
    return m;
  }
  static RescoreRequest decode(const Message& m) {
    return {detail::load_le<std::uint64_t>(m.data()), detail::load_le<std::uint32_t>(m.data() + 8),
            detail::load_le<std::uint32_t>(m.data() + 12)};
  }
  friend bool operator==(const RescoreRequest&, const RescoreRequest&) = default;
};

struct RescoreResponse {
  float delta = 0;  ///< RNNLM minus small-LM log score
  std::uint64_t next_packed = 0;

  Message encode() const {
    Message m{};
    detail::store_le<std::uint32_t>(m.data(), std::bit_cast<std::uint32_t>(delta));
    detail::store_le<std::uint64_t>(m.data() + 4, next_packed);
    return m;
  }
  static RescoreResponse decode(const Message& m) {
    return {std::bit_cast<float>(detail::load_le<std::uint32_t>(m.data())),
            detail::load_le<std::uint64_t>(m.data() + 4)};
  }
  friend bool operator==(const RescoreResponse&, const RescoreResponse&) = default;
};

/// Byte accounting for one stream. The baseline ships a full context in
/// place of each 16-byte message, in both directions.
struct TransferLedger {
  std::uint64_t context_bytes = 0;
  std::uint64_t requests = 0;
  std::uint64_t bytes_indexed = 0;
  std::uint64_t bytes_full_baseline = 0;

  explicit TransferLedger(std::uint64_t ctx_bytes = 0) : context_bytes(ctx_bytes) {}

  void record_exchange() {
    ++requests;
    bytes_indexed += 2 * kMessageBytes;
    bytes_full_baseline += 2 * context_bytes;
  }

  TransferLedger& operator+=(const TransferLedger& o) {
    requests += o.requests;
    bytes_indexed += o.bytes_indexed;
    bytes_full_baseline += o.bytes_full_baseline;
    return *this;
  }
};

/// Baseline bytes over indexed bytes for the ledger's traffic when each
/// message would have carried `context_bytes` instead.
inline double reduction_ratio(const TransferLedger& ledger, std::uint64_t context_bytes) {
  if (ledger.requests == 0) throw EmptyInputError("no requests recorded");
  const double baseline = static_cast<double>(ledger.requests) * 2.0 * static_cast<double>(context_bytes);
  return baseline / static_cast<double>(ledger.bytes_indexed);
}

}  // namespace otf
