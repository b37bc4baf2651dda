#include "hssc/rng.hpp"

#include <cmath>
#include <numbers>

namespace hssc {

namespace {

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t hash_string(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t CounterRng::next_u64() {
  const std::uint64_t c = counter_++;
  return mix64(mix64(key_ ^ 0x9e3779b97f4a7c15ULL) + c * 0x9e3779b97f4a7c15ULL);
}

double CounterRng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double CounterRng::normal() {
  // Box-Muller without a cached spare so the state stays (key, counter).
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Eigen::Index CounterRng::uniform_index(Eigen::Index n) {
  return static_cast<Eigen::Index>(uniform() * static_cast<double>(n)) % n;
}

CounterRng CounterRng::fork(std::string_view tag) const {
  return fork(hash_string(tag));
}

CounterRng CounterRng::fork(std::uint64_t tag) const {
  return CounterRng(mix64(key_ ^ mix64(tag + 0x632be59bd9b4e019ULL)), 0);
}

}  // namespace hssc
