#pragma once

#include <cstdint>

namespace niv {

inline constexpr uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Combine a seed with any number of stream identifiers into one key.
inline constexpr uint64_t stream_key(uint64_t seed) { return splitmix64(seed); }
template <typename... Rest>
inline constexpr uint64_t stream_key(uint64_t seed, uint64_t first, Rest... rest) {
  return stream_key(splitmix64(seed ^ splitmix64(first + 0x632be59bd9b4e019ull)), rest...);
}

// PCG32 (O'Neill). Each (seed, stream) pair is an independent sequence, which
// is what makes per-sample and per-pixel work order independent.
class Rng {
 public:
  Rng() : Rng(0, 0) {}
  Rng(uint64_t seed, uint64_t stream) {
    inc_ = (splitmix64(stream) << 1u) | 1u;
    state_ = 0;
    next_u32();
    state_ += splitmix64(seed);
    next_u32();
  }
  // Convenience: derive a stream from a composite key.
  static Rng keyed(uint64_t key) { return Rng(key, key ^ 0xda3e39cb94b95bdbull); }

  uint32_t next_u32() {
    const uint64_t old = state_;
    state_ = old * 6364136223846793005ull + inc_;
    const auto xorshifted = static_cast<uint32_t>(((old >> 18u) ^ old) >> 27u);
    const auto rot = static_cast<uint32_t>(old >> 59u);
    return (xorshifted >> rot) | (xorshifted << ((~rot + 1u) & 31));
  }
  // Uniform in [0, 1) with 32 bits of randomness.
  double uniform() { return next_u32() * 0x1p-32; }
  float uniform_f() {
    return static_cast<float>(next_u32() >> 8) * 0x1p-24f;
  }
  // Uniform integer in [0, n).
  uint32_t below(uint32_t n) { return static_cast<uint32_t>((uint64_t{next_u32()} * n) >> 32); }

 private:
  uint64_t state_;
  uint64_t inc_;
};

}  // namespace niv
