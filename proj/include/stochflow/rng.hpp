#pragma once

// Counter-based random numbers (Philox4x32-10, Salmon et al., SC'11).
//
// Every Gaussian draw is a pure function of (master seed, stream, path,
// step, component); there is no mutable generator state, so paths can be
// regenerated or produced in any order and on any thread with identical
// results.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace sflow {

using Philox4x32 = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

namespace detail {

inline constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
inline constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
inline constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
inline constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

constexpr void philox_round(Philox4x32& ctr, const PhiloxKey& key) {
  const std::uint64_t p0 = static_cast<std::uint64_t>(kPhiloxM0) * ctr[0];
  const std::uint64_t p1 = static_cast<std::uint64_t>(kPhiloxM1) * ctr[2];
  const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
  const auto lo0 = static_cast<std::uint32_t>(p0);
  const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
  const auto lo1 = static_cast<std::uint32_t>(p1);
  ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
}

}  // namespace detail

/// Ten-round Philox bijection of the 128-bit counter under a 64-bit key.
constexpr Philox4x32 philox4x32(Philox4x32 ctr, PhiloxKey key) {
  for (int round = 0; round < 10; ++round) {
    detail::philox_round(ctr, key);
    if (round < 9) {
      key[0] += detail::kPhiloxW0;
      key[1] += detail::kPhiloxW1;
    }
  }
  return ctr;
}

/// Stream tags keep independent consumers of one master seed apart.
enum class Stream : std::uint32_t {
  brownian = 0,
  auxiliary = 1,
};

/// Index tuple addressing one block of random bits.
/// Declared ranges: path < 2^64, step < 2^32, component < 2^25, stream < 2^7.
struct SeedIndex {
  Stream stream = Stream::brownian;
  std::uint64_t path = 0;
  std::uint32_t step = 0;
  std::uint32_t component = 0;
};

/// Stateless generator position: a Philox key and counter.
struct GeneratorState {
  PhiloxKey key{};
  Philox4x32 counter{};

  friend constexpr bool operator==(const GeneratorState&, const GeneratorState&) = default;

  /// 64 bits of the generator output at this position.
  [[nodiscard]] constexpr std::uint64_t fingerprint() const {
    const Philox4x32 out = philox4x32(counter, key);
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
  }
};

/// Maps (master, index) to a generator state. The counter packing is
/// injective over the declared index ranges and Philox is a bijection for a
/// fixed key, so distinct indices never share a state.
constexpr GeneratorState derive_seed(std::uint64_t master, const SeedIndex& index) {
  return GeneratorState{
      {static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32)},
      {static_cast<std::uint32_t>(index.path), static_cast<std::uint32_t>(index.path >> 32),
       index.step,
       (static_cast<std::uint32_t>(index.stream) << 25) | (index.component & 0x01FFFFFFu)}};
}

namespace detail {

// Uniform in the open interval (0, 1) from 64 random bits.
inline double open_uniform(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

}  // namespace detail

/// Standard normal variate addressed by (master, index), via Box-Muller on
/// one Philox block. Components 2k and 2k+1 are the two halves of the pair
/// drawn at the even position.
inline double standard_normal(std::uint64_t master, const SeedIndex& index) {
  SeedIndex even = index;
  even.component &= ~1u;
  const GeneratorState state = derive_seed(master, even);
  const Philox4x32 bits = philox4x32(state.counter, state.key);
  const double u1 = detail::open_uniform(bits[0], bits[1]);
  const double u2 = detail::open_uniform(bits[2], bits[3]);
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  return (index.component & 1u) ? radius * std::sin(angle) : radius * std::cos(angle);
}

/// Uniform (0,1) variate addressed like standard_normal.
inline double uniform01(std::uint64_t master, const SeedIndex& index) {
  SeedIndex even = index;
  even.component &= ~1u;
  const GeneratorState state = derive_seed(master, even);
  const Philox4x32 bits = philox4x32(state.counter, state.key);
  return (index.component & 1u) ? detail::open_uniform(bits[2], bits[3])
                                : detail::open_uniform(bits[0], bits[1]);
}

}  // namespace sflow
