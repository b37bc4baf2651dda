#pragma once

#include <cstdint>
#include <string_view>

#include <Eigen/Core>

namespace hssc {

// 64-bit FNV-1a, used to derive stream keys from stable names.
std::uint64_t hash_string(std::string_view text);

// Counter-based generator: output i is a pure function of (key, i), so a
// stream can be saved and restored as two integers and streams derived from
// distinct keys are independent. There is no global state.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key = 0, std::uint64_t counter = 0)
      : key_(key), counter_(counter) {}

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  // Uniform integer in [0, n).
  Eigen::Index uniform_index(Eigen::Index n);

  // Independent stream keyed by (key, tag).
  CounterRng fork(std::string_view tag) const;
  CounterRng fork(std::uint64_t tag) const;

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
};

}  // namespace hssc
