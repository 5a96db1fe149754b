#include <gtest/gtest.h>

#include <random>

#include "otf_rnnlm/transfer_codec.hpp"

using namespace otf;

TEST(Pack, BitArithmetic) {
  EXPECT_EQ(pack(1, 2, 32), 4294967298ull);
  EXPECT_EQ(pack(0, 0, 32), 0u);
  EXPECT_EQ(unpack(4294967298ull, 32), (UnpackedIndices{1, 2}));
  EXPECT_EQ(unpack(0, 32), (UnpackedIndices{0, 0}));
  EXPECT_EQ(pack(5, 1, 60), (5ull << 4) | 1);
}

TEST(Pack, OverflowNamesTheIndex) {
  try {
    pack(std::uint64_t{1} << 32, 0, 32);
    FAIL();
  } catch (const OverflowError& e) {
    EXPECT_NE(std::string(e.what()).find("rnnlm_index"), std::string::npos);
  }
  try {
    pack(0, std::uint64_t{1} << 40, 24);
    FAIL();
  } catch (const OverflowError& e) {
    EXPECT_NE(std::string(e.what()).find("smalllm_index"), std::string::npos);
  }
  EXPECT_THROW(pack(0, 0, 0), RangeError);
  EXPECT_THROW(pack(0, 0, 64), RangeError);
}

TEST(Pack, RandomRoundTrip) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000000; ++i) {
    const unsigned bits = 1 + static_cast<unsigned>(rng() % 63);
    const std::uint64_t a = rng() >> (64 - bits);
    const std::uint64_t b = rng() >> bits;
    ASSERT_EQ(unpack(pack(a, b, bits), bits), (UnpackedIndices{a, b}));
  }
}

TEST(Messages, RequestLayout) {
  const RescoreRequest r{0x0102030405060708ull, 0x0a0b0c0du, 0x11223344u};
  const Message m = r.encode();
  EXPECT_EQ(m.size(), 16u);
  EXPECT_EQ(std::to_integer<int>(m[0]), 0x08);
  EXPECT_EQ(std::to_integer<int>(m[7]), 0x01);
  EXPECT_EQ(std::to_integer<int>(m[8]), 0x0d);
  EXPECT_EQ(std::to_integer<int>(m[15]), 0x11);
  EXPECT_EQ(RescoreRequest::decode(m), r);
}

TEST(Messages, ResponseLayout) {
  const RescoreResponse r{-1.25f, 0xdeadbeef00000007ull};
  const Message m = r.encode();
  EXPECT_EQ(std::to_integer<int>(m[3]), 0xbf);  // -1.25f = 0xbfa00000
  EXPECT_EQ(std::to_integer<int>(m[4]), 0x07);
  EXPECT_EQ(std::to_integer<int>(m[11]), 0xde);
  for (int i = 12; i < 16; ++i) EXPECT_EQ(std::to_integer<int>(m[i]), 0);
  EXPECT_EQ(RescoreResponse::decode(m), r);
}

TEST(Ledger, RatioAtDefaultContextSize) {
  TransferLedger l(432);
  l.record_exchange();
  EXPECT_EQ(reduction_ratio(l, 432), 27.0);
  EXPECT_EQ(reduction_ratio(l, 16), 1.0);
  EXPECT_GE(reduction_ratio(l, 432), 25.0);
  EXPECT_THROW(reduction_ratio(TransferLedger(432), 432), EmptyInputError);
}

TEST(Ledger, CountersMatchIndependentAccounting) {
  std::mt19937_64 rng(2);
  TransferLedger total(432);
  std::uint64_t requests = 0;
  for (int batch = 0; batch < 100; ++batch) {
    TransferLedger part(432);
    const int n = static_cast<int>(rng() % 200);
    for (int i = 0; i < n; ++i) part.record_exchange();
    total += part;
    requests += static_cast<std::uint64_t>(n);
  }
  EXPECT_EQ(total.requests, requests);
  EXPECT_EQ(total.bytes_indexed, requests * (16 + 16));
  EXPECT_EQ(total.bytes_full_baseline, requests * (432 + 432));
}
