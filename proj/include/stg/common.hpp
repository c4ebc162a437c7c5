// Copyright (c) 2026 the stgnet authors
// SPDX-License-Identifier: Apache-2.0
//
// Shared error types, hashing, and small utilities used across the library.

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace stg {

inline constexpr const char* kVersionString = "stgnet 1.0.0";

// Error taxonomy. The CLI maps these onto process exit codes, so every
// failure raised by the library must derive from one of the three.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& m) : std::runtime_error(m) {}
};
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& m) : std::runtime_error(m) {}
};
struct InvariantError : std::runtime_error {
  explicit InvariantError(const std::string& m) : std::runtime_error(m) {}
};

#define STG_CHECK(cond, msg)                                   \
  do {                                                         \
    if (!(cond)) throw ::stg::InvariantError(std::string(msg)); \
  } while (0)

#define STG_CONFIG_CHECK(cond, msg)                          \
  do {                                                       \
    if (!(cond)) throw ::stg::ConfigError(std::string(msg)); \
  } while (0)

// FNV-1a 64-bit. Used for seed-stream derivation and dataset content hashes;
// must stay byte-stable forever, so it is written out rather than delegated
// to std::hash (which is unspecified across implementations).
inline std::uint64_t fnv1a64(std::string_view bytes,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

}  // namespace stg
