#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace fraudrl {

// Counter-based splittable generator, version "ctr64/v1".
//
// Every draw is a stateless mix of (key, counter); child streams are derived
// by folding a label or an index into the key. Any draw in the program is
// therefore addressable by a derivation path from the root seed, independent
// of evaluation order or worker count. The mix is splitmix64 finalization.
inline constexpr const char* kRngVersion = "ctr64/v1";

namespace rng_detail {

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

inline constexpr std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xbf58476d1ce4e5b9ULL;
  z ^= z >> 27;
  z *= 0x94d049bb133111ebULL;
  z ^= z >> 31;
  return z;
}

inline constexpr std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace rng_detail

class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : key_(key) {}

  // Named sub-stream (e.g. "datagen", "rollout").
  CounterRng derive(std::string_view label) const {
    return CounterRng(rng_detail::mix64(key_ ^ rng_detail::fnv1a64(label)));
  }

  // Indexed sub-stream (per instance, per step, per group slot, ...).
  CounterRng derive(std::uint64_t index) const {
    return CounterRng(rng_detail::mix64(key_ + rng_detail::kGolden * (index + 1)));
  }

  std::uint64_t key() const { return key_; }

  std::uint64_t next_u64() {
    return rng_detail::mix64(key_ + rng_detail::kGolden * ++counter_);
  }

  // Uniform in [0, 1) with 53 random bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform in {0, ..., n-1} via 128-bit multiply-shift.
  std::uint64_t next_below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Uniform integer in [lo, hi] inclusive.
  int next_int(int lo, int hi) {
    return lo + static_cast<int>(next_below(static_cast<std::uint64_t>(hi - lo + 1)));
  }

  // Standard normal via Box-Muller; pairs of draws share two uniforms.
  double next_gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    double u2 = next_double();
    double r = std::sqrt(-2.0 * std::log(u1));
    double angle = 2.0 * 3.141592653589793238462643383279502884 * u2;
    spare_ = r * std::sin(angle);
    have_spare_ = true;
    return r * std::cos(angle);
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace fraudrl
