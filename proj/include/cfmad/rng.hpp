#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace cfmad {

/// Deterministic RNG with identical output on every platform. The standard
/// <random> distributions are implementation-defined, which would break
/// byte-identical transcript reproduction across toolchains.
class DeterministicRng {
 public:
  explicit DeterministicRng(std::uint64_t seed) : state_(seed) {}

  // splitmix64
  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Unbiased draw in [0, n) via rejection.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) return 0;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v = next();
    while (v >= limit) v = next();
    return v % n;
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

  /// k distinct indices from [0, population), ascending. Selection sampling,
  /// so the relative order of the population is preserved.
  std::vector<std::size_t> sample_indices(std::size_t population, std::size_t k) {
    std::vector<std::size_t> out;
    out.reserve(k);
    std::size_t needed = k;
    for (std::size_t i = 0; i < population && needed > 0; ++i) {
      const std::size_t remaining = population - i;
      if (below(remaining) < needed) {
        out.push_back(i);
        --needed;
      }
    }
    return out;
  }

 private:
  std::uint64_t state_;
};

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Stable 64-bit FNV-1a, used to derive per-question seeds from string ids.
inline std::uint64_t hash_seed(std::uint64_t seed, std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ seed;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace cfmad
