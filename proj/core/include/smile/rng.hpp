#pragma once

#include <cstdint>
#include <vector>

namespace smile {

/// SplitMix64 generator. Small, fast, and trivially portable: the whole
/// pipeline seeds every stochastic step explicitly through this type so that
/// runs are bit-reproducible across platforms and standard-library versions.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * next_double();
  }

  /// Unbiased uniform integer in [0, bound). bound must be nonzero.
  uint64_t below(uint64_t bound) {
    const uint64_t limit = ~uint64_t{0} - (~uint64_t{0} % bound + 1) % bound;
    uint64_t x = next_u64();
    while (x > limit) x = next_u64();
    return x % bound;
  }

  size_t index(size_t n) { return size_t(below(uint64_t(n))); }

  /// Fisher-Yates shuffle.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  /// k distinct values from [0, n), in draw order (partial Fisher-Yates).
  std::vector<uint32_t> sample_without_replacement(size_t n, size_t k) {
    std::vector<uint32_t> pool(n);
    for (size_t i = 0; i < n; ++i) pool[i] = uint32_t(i);
    if (k > n) k = n;
    for (size_t i = 0; i < k; ++i) {
      size_t j = i + index(n - i);
      std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    return pool;
  }

 private:
  uint64_t state_;
};

/// Derives an independent sub-stream seed from a master seed. `stream` is a
/// caller-chosen tag (one per purpose), `index` an instance number, so the
/// same master seed never feeds the same raw state to two different
/// consumers.
inline uint64_t derive_seed(uint64_t master, uint64_t stream,
                            uint64_t index = 0) {
  Rng mix(master ^ 0x6a09e667f3bcc909ull);
  uint64_t a = mix.next_u64();
  Rng mix2(a ^ stream);
  uint64_t b = mix2.next_u64();
  Rng mix3(b ^ index);
  return mix3.next_u64();
}

}  // namespace smile
