#pragma once

#include <cstdint>
#include <limits>

namespace firelgcp {

/// Counter-based random stream. The n-th draw of stream `s` under seed `k`
/// is a pure function of (k, s, n), so substreams can be handed to workers
/// without affecting each other's output. Satisfies
/// UniformRandomBitGenerator.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  /// Independent child stream; does not advance this stream.
  CounterRng split(std::uint64_t stream) const;

  /// Uniform on the open interval (0, 1).
  double uniform();
  double normal();
  std::uint64_t poisson(double mean);
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  CounterRng(std::uint64_t key, std::uint64_t counter, int) : key_(key), counter_(counter) {}
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x);

}  // namespace firelgcp
