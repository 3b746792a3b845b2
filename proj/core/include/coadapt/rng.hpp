#pragma once

// Seeded randomness used everywhere in the toolkit.
//
// The engine is std::mt19937_64, whose output sequence is fixed by the C++
// standard. The standard distributions are not portable, so every mapping
// from raw 64-bit draws to values is defined here:
//
//   uniform()          (draw >> 11) * 2^-53, in [0, 1)
//   uniform_index(n)   rejection sampling: threshold = (2^64 - n) mod n;
//                      draw until draw >= threshold; return draw mod n
//   normal()           Box-Muller with u1 = 1 - uniform(), u2 = uniform(),
//                      z = sqrt(-2 ln u1) * cos(2 pi u2); one pair per call
//   shuffle(v)         Fisher-Yates from the back, j = uniform_index(i + 1)
//
// Independent streams are split from a root seed with derive_seed(), so the
// values a consumer sees do not depend on how many other consumers exist.

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <utility>

namespace coadapt {

std::uint64_t splitmix64(std::uint64_t x);

/// Seed for sub-stream `stream` of `root`.
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream);

/// FNV-1a, used to key streams by a name (e.g. a domain id).
std::uint64_t hash_name(std::string_view name);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::uint64_t uniform_index(std::uint64_t n);
  /// Inclusive integer range.
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(uniform_index(static_cast<std::uint64_t>(hi - lo) + 1));
  }
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_index(i));
      using std::swap;
      swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace coadapt
