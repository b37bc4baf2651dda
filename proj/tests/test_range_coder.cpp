#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "hssc/errors.hpp"
#include "hssc/range_coder.hpp"
#include "hssc/rng.hpp"

namespace hssc {
namespace {

FrequencyTable uniform_table(int n) {
  std::vector<double> p(static_cast<std::size_t>(n), 1.0 / n);
  return FrequencyTable::from_pmf(p);
}

std::vector<std::uint8_t> encode_all(const FrequencyTable& t, const std::vector<int>& s) {
  RangeEncoder enc;
  for (int v : s) enc.encode(t, v);
  return enc.finish();
}

TEST(BitPacker, RoundTripsMixedFields) {
  BitWriter w;
  w.write_bits(5, 3);
  w.write_u16(0xBEEF);
  w.write_f32(1.5f);
  w.write_bits(1, 1);
  w.write_u64(0x0123456789ABCDEFULL);
  const std::uint64_t written = w.bit_count();
  const auto bytes = w.take();
  BitReader r(bytes);
  EXPECT_EQ(r.read_bits(3), 5u);
  EXPECT_EQ(r.read_u16(), 0xBEEF);
  EXPECT_EQ(r.read_f32(), 1.5f);
  EXPECT_EQ(r.read_bits(1), 1u);
  EXPECT_EQ(r.read_u64(), 0x0123456789ABCDEFULL);
  EXPECT_EQ(r.bit_count(), written);
  EXPECT_THROW(r.read_u8(), BitstreamError);
}

TEST(BitPacker, LittleEndianBytes) {
  BitWriter w;
  w.write_u32(0x04030201);
  EXPECT_EQ(w.bytes(), (std::vector<std::uint8_t>{1, 2, 3, 4}));
}

TEST(FrequencyTable, SumsToTotalAndKeepsRareSymbols) {
  std::vector<double> p = {1e-12, 0.5, 0.5 - 1e-12};
  const auto t = FrequencyTable::from_pmf(p);
  EXPECT_EQ(t.freq(0), 1u);
  EXPECT_EQ(std::uint64_t{t.freq(0)} + t.freq(1) + t.freq(2), FrequencyTable::kTotal);
  EXPECT_EQ(t.find(0), 0);
  EXPECT_EQ(t.find(1), 1);
  EXPECT_EQ(t.find(FrequencyTable::kTotal - 1), 2);
}

TEST(RangeCoder, UniformByteSymbolsCostOneBytePerSymbol) {
  const auto t = uniform_table(256);
  CounterRng rng(1);
  std::vector<int> s(10000);
  for (int& v : s) v = static_cast<int>(rng.uniform_index(256));
  const auto bytes = encode_all(t, s);
  EXPECT_NEAR(static_cast<double>(bytes.size()), 10000.0, 40.0);
  RangeDecoder dec(bytes);
  for (int v : s) ASSERT_EQ(dec.decode(t), v);
}

TEST(RangeCoder, EmptySequenceHasEmptyPayload) {
  const auto t = uniform_table(4);
  EXPECT_TRUE(encode_all(t, {}).empty());
}

TEST(RangeCoder, Deterministic) {
  const auto t = uniform_table(7);
  std::vector<int> s = {1, 2, 3, 6, 0, 0, 5};
  EXPECT_EQ(encode_all(t, s), encode_all(t, s));
}

TEST(RangeCoder, CertainSymbolsCostNothing) {
  const auto t = FrequencyTable::from_pmf(std::vector<double>{1.0});
  const std::vector<int> s(5000, 0);
  const auto bytes = encode_all(t, s);
  EXPECT_TRUE(bytes.empty());
  RangeDecoder dec(bytes);
  for (int i = 0; i < 5000; ++i) ASSERT_EQ(dec.decode(t), 0);
  EXPECT_EQ(dec.bytes_consumed(), 0u);
}

TEST(RangeCoder, FlushIsAtMostFourBytes) {
  std::vector<double> p = {0.6, 0.3, 0.1};
  const auto t = FrequencyTable::from_pmf(p);
  for (int n = 1; n < 200; n += 7) {
    std::vector<int> s(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) s[static_cast<std::size_t>(i)] = (i * 7 + n) % 3;
    RangeEncoder enc;
    double info = 0.0;
    for (int v : s) {
      enc.encode(t, v);
      info += t.bits(v);
    }
    const auto bytes = enc.finish();
    EXPECT_LE(8.0 * double(bytes.size()), info + 40.0) << n;
    RangeDecoder dec(bytes);
    for (int v : s) ASSERT_EQ(dec.decode(t), v);
  }
}

TEST(RangeCoder, TruncatedPayloadUnderruns) {
  const auto t = uniform_table(256);
  std::vector<int> s(100);
  std::iota(s.begin(), s.end(), 0);
  auto bytes = encode_all(t, s);
  bytes.resize(bytes.size() - 20);
  RangeDecoder dec(bytes);
  try {
    for (std::size_t i = 0; i < s.size(); ++i) dec.decode(t);
    FAIL();
  } catch (const BitstreamError& e) {
    EXPECT_NE(std::string(e.what()).find("bitstream underrun"), std::string::npos);
  }
}

TEST(RangeCoder, CorruptLastByteNeverCrashes) {
  std::vector<double> p = {0.7, 0.2, 0.05, 0.05};
  const auto t = FrequencyTable::from_pmf(p);
  CounterRng rng(3);
  std::vector<int> s(500);
  for (int& v : s) v = static_cast<int>(rng.uniform_index(4));
  auto bytes = encode_all(t, s);
  for (int flip = 1; flip < 256; flip += 17) {
    auto bad = bytes;
    bad.back() ^= static_cast<std::uint8_t>(flip);
    RangeDecoder dec(bad);
    try {
      for (std::size_t i = 0; i < s.size(); ++i) {
        const int v = dec.decode(t);
        ASSERT_GE(v, 0);
        ASSERT_LT(v, 4);
      }
    } catch (const BitstreamError&) {
    }
  }
}

TEST(RangeCoder, SkewedModelNearEntropy) {
  std::vector<double> p = {0.9, 0.05, 0.03, 0.02};
  const auto t = FrequencyTable::from_pmf(p);
  CounterRng rng(11);
  std::vector<int> s(20000);
  double info = 0;
  for (int& v : s) {
    const double u = rng.uniform();
    v = u < 0.9 ? 0 : (u < 0.95 ? 1 : (u < 0.98 ? 2 : 3));
    info += t.bits(v);
  }
  const auto bytes = encode_all(t, s);
  const double bits = 8.0 * static_cast<double>(bytes.size());
  EXPECT_LE(bits, info + 256);
  EXPECT_LE(bits, info * 1.01);
  RangeDecoder dec(bytes);
  for (int v : s) ASSERT_EQ(dec.decode(t), v);
}

TEST(RangeCoder, RejectsSymbolOutsideSupport) {
  std::vector<double> p = {0.5, 0.0, 0.5};
  const auto t = FrequencyTable::from_pmf(p);
  RangeEncoder enc;
  EXPECT_THROW(enc.encode(t, 1), std::out_of_range);
  EXPECT_THROW(enc.encode(t, 3), std::out_of_range);
}

}  // namespace
}  // namespace hssc
