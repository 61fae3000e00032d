// Copyright 2026 The hfl Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// =============================================================================
//
// Counter-based random streams.
//
// Every stochastic event in a simulation draws from its own stream, keyed by
// the master seed and a structured label (event kind, ids, round indices).
// A stream is a Philox4x32-10 generator whose key and upper counter words are
// hashed from (seed, label); the lower counter words count blocks. Streams are
// therefore independent of creation order, so sequential and multi-threaded
// execution produce identical draws.

#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <limits>

namespace hfl {

/// Event kinds used as the first word of engine stream labels.
enum class StreamKind : std::uint64_t {
  kGradient = 1,
  kClientQuantizer = 2,
  kEdgeQuantizer = 3,
  kPartition = 4,
  kCertification = 5,
  kConstants = 6,
  kDataset = 7,
  kSweep = 8,
  kInit = 9,
};

namespace detail {

inline constexpr std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t hash_words(std::uint64_t seed, std::uint64_t salt,
                                          std::initializer_list<std::uint64_t> words) {
  std::uint64_t h = splitmix64(seed ^ salt);
  for (std::uint64_t w : words) h = splitmix64(h ^ splitmix64(w + salt));
  return splitmix64(h ^ (words.size() * 0x632BE59BD9B4E019ULL));
}

}  // namespace detail

/// Philox4x32 with 10 rounds (Salmon et al. counter-based generator).
struct Philox4x32 {
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static constexpr Counter block(Counter ctr, Key key) {
    constexpr std::uint32_t kM0 = 0xD2511F53U;
    constexpr std::uint32_t kM1 = 0xCD9E8D57U;
    constexpr std::uint32_t kW0 = 0x9E3779B9U;
    constexpr std::uint32_t kW1 = 0xBB67AE85U;
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
      const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const auto lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const auto lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
      key[0] += kW0;
      key[1] += kW1;
    }
    return ctr;
  }
};

/// A reproducible stream of 64-bit words, fully determined by (seed, label).
/// Satisfies UniformRandomBitGenerator so it plugs into <random> distributions.
class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream(std::uint64_t seed, std::initializer_list<std::uint64_t> label)
      : key_hash_(detail::hash_words(seed, 0x5851F42D4C957F2DULL, label)),
        tag_hash_(detail::hash_words(seed, 0x14057B7EF767814FULL, label)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    if (slot_ == 2) refill();
    return buffer_[slot_++];
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

 private:
  void refill() {
    const Philox4x32::Counter ctr = {static_cast<std::uint32_t>(block_),
                                     static_cast<std::uint32_t>(block_ >> 32),
                                     static_cast<std::uint32_t>(tag_hash_),
                                     static_cast<std::uint32_t>(tag_hash_ >> 32)};
    const Philox4x32::Key key = {static_cast<std::uint32_t>(key_hash_),
                                 static_cast<std::uint32_t>(key_hash_ >> 32)};
    const auto out = Philox4x32::block(ctr, key);
    buffer_[0] = (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
    buffer_[1] = (static_cast<std::uint64_t>(out[3]) << 32) | out[2];
    ++block_;
    slot_ = 0;
  }

  std::uint64_t key_hash_;
  std::uint64_t tag_hash_;
  std::uint64_t block_ = 0;
  std::array<std::uint64_t, 2> buffer_{};
  int slot_ = 2;
};

/// Derives a child seed from a parent seed and an index path. Used for sweep
/// points and repetitions: keyed, never sequential, so a run's seed depends
/// only on its own indices.
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  return detail::hash_words(seed, 0xD1B54A32D192ED03ULL, path);
}

inline RngStream make_stream(std::uint64_t seed, StreamKind kind, std::uint64_t a = 0,
                             std::uint64_t b = 0, std::uint64_t c = 0) {
  return RngStream(seed, {static_cast<std::uint64_t>(kind), a, b, c});
}

}  // namespace hfl
