#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>

#include <Eigen/Core>

#include "hssc/errors.hpp"

// Little-endian binary helpers for checkpoint and bitstream files.
namespace hssc {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

template <typename T>
void write_le(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  T value;
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) {
    throw FormatError("payload underrun");
  }
  return value;
}

inline void write_bytes(std::ostream& out, const std::string& s) {
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_bytes(std::istream& in, std::size_t n) {
  std::string s(n, '\0');
  if (n > 0 && !in.read(s.data(), static_cast<std::streamsize>(n))) {
    throw FormatError("payload underrun");
  }
  return s;
}

inline void write_doubles(std::ostream& out, const Eigen::VectorXd& v) {
  write_le<std::uint64_t>(out, static_cast<std::uint64_t>(v.size()));
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}

inline void read_doubles(std::istream& in, Eigen::VectorXd& v) {
  const auto n = read_le<std::uint64_t>(in);
  if (n != static_cast<std::uint64_t>(v.size())) throw FormatError("vector length mismatch");
  if (n > 0 && !in.read(reinterpret_cast<char*>(v.data()),
                        static_cast<std::streamsize>(n * sizeof(double)))) {
    throw FormatError("payload underrun");
  }
}

}  // namespace hssc
