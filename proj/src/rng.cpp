#include "diffnet/rng.hpp"

namespace diffnet {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

KeyedStream::KeyedStream(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                         std::uint64_t c) noexcept {
  std::uint64_t k = splitmix64(seed);
  k = splitmix64(k ^ splitmix64(a + 0x632BE59BD9B4E019ULL));
  k = splitmix64(k ^ splitmix64(b + 0x8CB92BA72F3D8DD7ULL));
  k = splitmix64(k ^ splitmix64(c + 0xD1B54A32D192ED03ULL));
  key_ = k;
}

KeyedStream::result_type KeyedStream::operator()() noexcept {
  // SplitMix64 evaluated at key + counter * golden gamma.
  return splitmix64(key_ + (counter_++) * 0x9E3779B97F4A7C15ULL);
}

double KeyedStream::uniform() noexcept {
  return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
}

double KeyedStream::normal() noexcept { return normal_(*this); }

}  // namespace diffnet
