#include "hssc/range_coder.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

#include "hssc/errors.hpp"

namespace hssc {

// ------------------------------------------------------------------ bit packer

void BitWriter::write_bits(std::uint64_t value, int count) {
  for (int i = 0; i < count; ++i) {
    const std::uint64_t bit_pos = bits_ & 7;
    if (bit_pos == 0) buffer_.push_back(0);
    if ((value >> i) & 1u) buffer_.back() |= static_cast<std::uint8_t>(1u << bit_pos);
    ++bits_;
  }
}

void BitWriter::write_f32(float v) { write_u32(std::bit_cast<std::uint32_t>(v)); }
void BitWriter::write_f64(double v) { write_u64(std::bit_cast<std::uint64_t>(v)); }

void BitWriter::write_bytes(std::span<const std::uint8_t> bytes) {
  if ((bits_ & 7) == 0) {
    buffer_.insert(buffer_.end(), bytes.begin(), bytes.end());
    bits_ += 8 * bytes.size();
    return;
  }
  for (std::uint8_t b : bytes) write_u8(b);
}

std::uint64_t BitReader::read_bits(int count) {
  if (bits_remaining() < static_cast<std::uint64_t>(count)) {
    throw BitstreamError("bitstream underrun");
  }
  std::uint64_t v = 0;
  for (int i = 0; i < count; ++i) {
    const std::uint8_t byte = bytes_[bits_ >> 3];
    if ((byte >> (bits_ & 7)) & 1u) v |= std::uint64_t{1} << i;
    ++bits_;
  }
  return v;
}

float BitReader::read_f32() { return std::bit_cast<float>(read_u32()); }
double BitReader::read_f64() { return std::bit_cast<double>(read_u64()); }

std::vector<std::uint8_t> BitReader::read_bytes(std::size_t count) {
  if (bits_remaining() < 8 * static_cast<std::uint64_t>(count)) {
    throw BitstreamError("bitstream underrun");
  }
  std::vector<std::uint8_t> out(count);
  if ((bits_ & 7) == 0) {
    std::memcpy(out.data(), bytes_.data() + (bits_ >> 3), count);
    bits_ += 8 * count;
    return out;
  }
  for (auto& b : out) b = read_u8();
  return out;
}

// ------------------------------------------------------------ frequency table

FrequencyTable FrequencyTable::from_pmf(std::span<const double> pmf) {
  if (pmf.empty()) throw std::invalid_argument("frequency table: empty pmf");
  std::vector<std::uint32_t> freqs(pmf.size());
  std::int64_t sum = 0;
  for (std::size_t i = 0; i < pmf.size(); ++i) {
    if (!(pmf[i] >= 0.0) || !std::isfinite(pmf[i])) {
      throw std::invalid_argument("frequency table: invalid probability");
    }
    if (pmf[i] > 0.0) {
      freqs[i] = std::max<std::uint32_t>(
          1, static_cast<std::uint32_t>(std::llround(pmf[i] * static_cast<double>(kTotal))));
    }
    sum += freqs[i];
  }
  // Settle the rounding residue on the most probable symbols.
  std::int64_t diff = static_cast<std::int64_t>(kTotal) - sum;
  while (diff != 0) {
    auto it = std::max_element(freqs.begin(), freqs.end());
    if (diff > 0) {
      *it += static_cast<std::uint32_t>(diff);
      diff = 0;
    } else {
      const std::int64_t take = std::min<std::int64_t>(-diff, static_cast<std::int64_t>(*it) - 1);
      if (take <= 0) throw std::invalid_argument("frequency table: cannot normalize");
      *it -= static_cast<std::uint32_t>(take);
      diff += take;
    }
  }
  return from_frequencies(std::move(freqs));
}

FrequencyTable FrequencyTable::from_frequencies(std::vector<std::uint32_t> freqs) {
  FrequencyTable t;
  t.freq_ = std::move(freqs);
  t.cum_.resize(t.freq_.size() + 1);
  std::uint64_t acc = 0;
  for (std::size_t i = 0; i < t.freq_.size(); ++i) {
    t.cum_[i] = static_cast<std::uint32_t>(acc);
    acc += t.freq_[i];
  }
  if (acc != kTotal) throw std::invalid_argument("frequency table: frequencies must sum to 2^24");
  t.cum_.back() = kTotal;
  return t;
}

int FrequencyTable::find(std::uint32_t target) const {
  auto it = std::upper_bound(cum_.begin(), cum_.end(), target);
  int s = static_cast<int>(it - cum_.begin()) - 1;
  // Skip zero-frequency symbols sharing the same cumulative value.
  while (freq_[static_cast<std::size_t>(s)] == 0 && s + 1 < size()) ++s;
  return s;
}

double FrequencyTable::bits(int symbol) const {
  return kPrecisionBits - std::log2(static_cast<double>(freq(symbol)));
}

// --------------------------------------------------------------- range coder

namespace {
constexpr std::uint64_t kTop = std::uint64_t{1} << 56;
constexpr std::uint64_t kBottom = std::uint64_t{1} << 32;
}  // namespace

void RangeEncoder::encode(const FrequencyTable& table, int symbol) {
  if (symbol < 0 || symbol >= table.size() || table.freq(symbol) == 0) {
    throw std::out_of_range("range coder: symbol outside the table support");
  }
  used_ = true;
  const std::uint64_t r = range_ >> FrequencyTable::kPrecisionBits;
  low_ += r * table.cum(symbol);
  range_ = r * table.freq(symbol);
  normalize();
}

void RangeEncoder::normalize() {
  while ((low_ ^ (low_ + range_)) < kTop ||
         (range_ < kBottom && ((range_ = (0 - low_) & (kBottom - 1)), true))) {
    out_.push_back(static_cast<std::uint8_t>(low_ >> 56));
    low_ <<= 8;
    range_ <<= 8;
  }
}

std::vector<std::uint8_t> RangeEncoder::finish() {
  if (used_) {
    // Shortest byte prefix of a value in [low, low + range); the decoder
    // reads the missing tail as zeros.
    for (int k = 0; k <= 8; ++k) {
      const unsigned __int128 unit = static_cast<unsigned __int128>(1) << (64 - 8 * k);
      const unsigned __int128 v = (static_cast<unsigned __int128>(low_) + unit - 1) / unit * unit;
      if (v - low_ < range_) {
        for (int i = 0; i < k; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (56 - 8 * i)));
        break;
      }
    }
  }
  used_ = false;
  return std::move(out_);
}

std::uint8_t RangeDecoder::next_byte() {
  // At most 8 implicit zero bytes follow a shortened flush.
  if (pos_ >= bytes_.size() + 8) throw BitstreamError("bitstream underrun");
  const std::size_t i = pos_++;
  return i < bytes_.size() ? bytes_[i] : 0;
}

void RangeDecoder::start() {
  for (int i = 0; i < 8; ++i) code_ = (code_ << 8) | next_byte();
  started_ = true;
}

int RangeDecoder::decode(const FrequencyTable& table) {
  if (!started_) start();
  const std::uint64_t r = range_ >> FrequencyTable::kPrecisionBits;
  std::uint64_t target = (code_ - low_) / r;
  if (target >= FrequencyTable::kTotal) target = FrequencyTable::kTotal - 1;
  const int symbol = table.find(static_cast<std::uint32_t>(target));
  low_ += r * table.cum(symbol);
  range_ = r * table.freq(symbol);
  normalize();
  return symbol;
}

void RangeDecoder::normalize() {
  while ((low_ ^ (low_ + range_)) < kTop ||
         (range_ < kBottom && ((range_ = (0 - low_) & (kBottom - 1)), true))) {
    code_ = (code_ << 8) | next_byte();
    low_ <<= 8;
    range_ <<= 8;
  }
}

}  // namespace hssc
