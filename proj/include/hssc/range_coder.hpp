#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <vector>

namespace hssc {

// Byte buffer written LSB-first, so byte-aligned integer fields come out
// little-endian.
class BitWriter {
 public:
  void write_bits(std::uint64_t value, int count);
  void write_u8(std::uint8_t v) { write_bits(v, 8); }
  void write_u16(std::uint16_t v) { write_bits(v, 16); }
  void write_u32(std::uint32_t v) { write_bits(v, 32); }
  void write_u64(std::uint64_t v) { write_bits(v, 64); }
  void write_f32(float v);
  void write_f64(double v);
  void write_bytes(std::span<const std::uint8_t> bytes);

  std::uint64_t bit_count() const { return bits_; }
  const std::vector<std::uint8_t>& bytes() const { return buffer_; }
  std::vector<std::uint8_t> take() { return std::move(buffer_); }

 private:
  std::vector<std::uint8_t> buffer_;
  std::uint64_t bits_ = 0;
};

// Throws BitstreamError("bitstream underrun") when reading past the end.
class BitReader {
 public:
  explicit BitReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint64_t read_bits(int count);
  std::uint8_t read_u8() { return static_cast<std::uint8_t>(read_bits(8)); }
  std::uint16_t read_u16() { return static_cast<std::uint16_t>(read_bits(16)); }
  std::uint32_t read_u32() { return static_cast<std::uint32_t>(read_bits(32)); }
  std::uint64_t read_u64() { return read_bits(64); }
  float read_f32();
  double read_f64();
  std::vector<std::uint8_t> read_bytes(std::size_t count);

  std::uint64_t bit_count() const { return bits_; }
  std::uint64_t bits_remaining() const { return bytes_.size() * 8 - bits_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::uint64_t bits_ = 0;
};

// Integer cumulative frequencies summing to 2^kPrecisionBits. Every symbol
// with positive probability gets a frequency of at least 1.
class FrequencyTable {
 public:
  static constexpr int kPrecisionBits = 24;
  static constexpr std::uint32_t kTotal = 1u << kPrecisionBits;

  FrequencyTable() = default;
  // Quantizes a normalized pmf; entries must be >= 0 and sum to ~1.
  static FrequencyTable from_pmf(std::span<const double> pmf);
  static FrequencyTable from_frequencies(std::vector<std::uint32_t> freqs);

  int size() const { return static_cast<int>(freq_.size()); }
  std::uint32_t freq(int symbol) const { return freq_[static_cast<std::size_t>(symbol)]; }
  std::uint32_t cum(int symbol) const { return cum_[static_cast<std::size_t>(symbol)]; }
  // Symbol s with cum(s) <= target < cum(s) + freq(s).
  int find(std::uint32_t target) const;
  // Ideal code length of `symbol` under the quantized table.
  double bits(int symbol) const;

 private:
  std::vector<std::uint32_t> freq_;
  std::vector<std::uint32_t> cum_;
};

// Carry-less range coder (Subbotin style) with 64-bit low/range, byte-wise
// emission and renormalization that keeps range >= 2^32. finish() flushes
// the shortest byte prefix that pins the final interval (0 to 4 bytes); the
// decoder reads up to 8 zero bytes past the end. An encoder that coded
// nothing emits nothing.
class RangeEncoder {
 public:
  void encode(const FrequencyTable& table, int symbol);
  std::vector<std::uint8_t> finish();

 private:
  void normalize();

  std::uint64_t low_ = 0;
  std::uint64_t range_ = ~std::uint64_t{0};
  std::vector<std::uint8_t> out_;
  bool used_ = false;
};

class RangeDecoder {
 public:
  explicit RangeDecoder(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  int decode(const FrequencyTable& table);
  std::size_t bytes_consumed() const { return std::min(pos_, bytes_.size()); }

 private:
  std::uint8_t next_byte();
  void start();
  void normalize();

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  std::uint64_t low_ = 0;
  std::uint64_t range_ = ~std::uint64_t{0};
  std::uint64_t code_ = 0;
  bool started_ = false;
};

}  // namespace hssc
