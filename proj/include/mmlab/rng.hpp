#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>

namespace mmlab {

/// Roles that get their own independent random stream inside a run.
enum class StreamRole : std::uint64_t {
  Valuation = 1,
  Price = 2,
  Policy = 3,
  Perturbation = 4,
  Auxiliary = 5,
};

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Counter-based generator: the n-th output is a pure function of (key, n).
/// Distinct keys give statistically independent streams, so a run can hand
/// each role its own stream without any shared state.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit constexpr Rng(std::uint64_t key) noexcept : key_(splitmix64(key)) {}

  /// Stream keyed by a base seed and an arbitrary coordinate tuple.
  static Rng stream(std::uint64_t base_seed, std::initializer_list<std::uint64_t> coords) noexcept {
    std::uint64_t k = splitmix64(base_seed);
    for (std::uint64_t c : coords) k = splitmix64(k ^ splitmix64(c + 0x632be59bd9b4e019ULL));
    return Rng(k);
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept { return splitmix64(key_ ^ splitmix64(counter_++)); }

  /// Uniform on the open interval (0, 1).
  double uniform() noexcept {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  std::uint64_t position() const noexcept { return counter_; }
  std::uint64_t key() const noexcept { return key_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace mmlab
