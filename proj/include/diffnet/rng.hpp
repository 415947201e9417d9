#pragma once

#include <cstdint>
#include <limits>
#include <random>

namespace diffnet {

/// Counter-based random stream.
///
/// A stream is fully determined by its key (seed plus up to three integer
/// coordinates such as agent, iteration and a purpose tag). Two streams with
/// the same key produce the same sequence no matter which thread draws from
/// them or in what order other streams were consumed. Satisfies
/// UniformRandomBitGenerator, so it plugs into <random> distributions.
class KeyedStream {
 public:
  using result_type = std::uint64_t;

  KeyedStream(std::uint64_t seed, std::uint64_t a = 0, std::uint64_t b = 0,
              std::uint64_t c = 0) noexcept;

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept;

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() noexcept;

  /// Standard normal draw.
  double normal() noexcept;

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

// Stream purpose tags, kept distinct so that independent uses never share a key.
namespace stream_tag {
inline constexpr std::uint64_t kGradient = 1;
inline constexpr std::uint64_t kAgentSelect = 2;
inline constexpr std::uint64_t kGraph = 3;
inline constexpr std::uint64_t kEstimate = 4;
inline constexpr std::uint64_t kBattery = 5;
}  // namespace stream_tag

}  // namespace diffnet
