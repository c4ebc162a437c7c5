// Copyright (c) 2026 the stgnet authors
// SPDX-License-Identifier: Apache-2.0
//
// Deterministic random streams. One master seed fans out into independent
// named substreams via hashing, so any component can be re-run in isolation
// (or in parallel) and still produce the bytes a serial run would produce.
// Distributions are hand-rolled because the std:: ones are not required to
// be bit-identical across standard library implementations.

#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

#include "stg/common.hpp"

namespace stg {

// xoshiro256** with splitmix64 seeding.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& si : s_) {
      x = splitmix64(x);
      si = x;
    }
    // All-zero state is the one forbidden state; seed 0 must still work.
    if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0) s_[0] = 0x9e3779b97f4a7c15ULL;
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Unbiased integer in [0, bound) via Lemire's multiply-shift with rejection.
  std::uint64_t next_below(std::uint64_t bound) {
    STG_CHECK(bound > 0, "next_below: bound must be positive");
    std::uint64_t x = next_u64();
    unsigned __int128 m = static_cast<unsigned __int128>(x) * bound;
    auto lo = static_cast<std::uint64_t>(m);
    if (lo < bound) {
      const std::uint64_t threshold = (0 - bound) % bound;
      while (lo < threshold) {
        x = next_u64();
        m = static_cast<unsigned __int128>(x) * bound;
        lo = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  int next_int(int lo, int hi_inclusive) {
    STG_CHECK(lo <= hi_inclusive, "next_int: empty range");
    const auto span = static_cast<std::uint64_t>(hi_inclusive - lo) + 1;
    return lo + static_cast<int>(next_below(span));
  }

  // Uniform in [0, 1) with 53 random bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  bool bernoulli(double p) { return next_double() < p; }

  // Box-Muller; the pair partner is cached so cost amortizes to one
  // transform per two samples while staying fully deterministic.
  double normal(double mean = 0.0, double stddev = 1.0) {
    if (has_spare_) {
      has_spare_ = false;
      return mean + stddev * spare_;
    }
    double u1 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return mean + stddev * r * std::cos(theta);
  }

  // Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  std::uint64_t s_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Derives the seed of the substream identified by (purpose, id) under a
// master seed. Streams for different purposes or ids are independent; the
// derivation is pure, so parallel workers can open streams on demand.
inline std::uint64_t stream_seed(std::uint64_t master, std::string_view purpose,
                                 std::uint64_t id = 0) {
  std::uint64_t h = fnv1a64(purpose);
  h = splitmix64(h ^ splitmix64(master));
  h = splitmix64(h ^ id);
  return h;
}

inline Rng stream_rng(std::uint64_t master, std::string_view purpose,
                      std::uint64_t id = 0) {
  return Rng(stream_seed(master, purpose, id));
}

}  // namespace stg
