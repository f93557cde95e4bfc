#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <limits>

namespace heavyrange {

// Philox4x32-10 counter-based generator (Salmon et al., SC'11).  A stream is
// identified by a 64-bit key; the 128-bit counter is split into a 64-bit
// stream selector and a 64-bit block index, so distinct (key, stream) pairs
// never overlap.  Satisfies UniformRandomBitGenerator with 64-bit output.
class Philox {
 public:
  using result_type = std::uint64_t;
  using Block = std::array<std::uint32_t, 4>;

  explicit Philox(std::uint64_t key, std::uint64_t stream = 0) noexcept
      : key_{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)},
        stream_(stream) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept {
    if (lane_ == 2) {
      refill();
    }
    const auto hi = static_cast<std::uint64_t>(buffer_[2 * lane_ + 1]);
    const auto lo = static_cast<std::uint64_t>(buffer_[2 * lane_]);
    ++lane_;
    return (hi << 32) | lo;
  }

  // Uniform double in the open interval (0, 1) with 53 random bits.
  double uniform() noexcept {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Raw block function, exposed for known-answer tests.
  static Block encrypt(Block counter, std::array<std::uint32_t, 2> key) noexcept;

 private:
  void refill() noexcept {
    const Block counter{static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
                        static_cast<std::uint32_t>(stream_),
                        static_cast<std::uint32_t>(stream_ >> 32)};
    buffer_ = encrypt(counter, key_);
    ++block_;
    lane_ = 0;
  }

  std::array<std::uint32_t, 2> key_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  Block buffer_{};
  int lane_ = 2;
};

// SplitMix64 finalizer; a bijective 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Derives a child key from a parent key and a path of integer labels.  Used
// for per-node streams in the environment and per-replica streams in studies.
constexpr std::uint64_t derive_key(std::uint64_t parent,
                                   std::initializer_list<std::uint64_t> path) noexcept {
  std::uint64_t k = mix64(parent);
  for (std::uint64_t label : path) {
    k = mix64(k ^ mix64(label + 0x632BE59BD9B4E019ULL));
  }
  return k;
}

}  // namespace heavyrange
