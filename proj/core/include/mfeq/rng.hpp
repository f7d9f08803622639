#ifndef MFEQ_RNG_HPP
#define MFEQ_RNG_HPP

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>

namespace mfeq {
namespace rng {

using Block = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

/// Philox-4x32 keyed permutation, 10 rounds.  Counter-based: the caller owns
/// the counter layout, every distinct (counter, key) pair yields an
/// independent 128-bit block.
inline Block philox4x32(Block ctr, Key key) {
  constexpr std::uint32_t M0 = 0xD2511F53u;
  constexpr std::uint32_t M1 = 0xCD9E8D57u;
  constexpr std::uint32_t W0 = 0x9E3779B9u;
  constexpr std::uint32_t W1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(M0) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(M1) * ctr[2];
    const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
    const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += W0;
    key[1] += W1;
  }
  return ctr;
}

/// Uniform in (0, 1) from 64 random bits, 53-bit resolution, never 0 or 1.
inline double uniform01(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits = (static_cast<std::uint64_t>(hi) << 32) | lo;
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

/// Fills `out` with `count` independent standard normals addressed by
/// (seed, stream, a, b, c).  Pure function of its arguments: the draw for a
/// given address never depends on evaluation order or thread schedule.
/// Indices a, b, c must stay below 2^32.
inline void normals(std::uint64_t seed, std::uint32_t stream, std::uint64_t a,
                    std::uint64_t b, std::uint64_t c, double* out, std::size_t count) {
  const Key key = {static_cast<std::uint32_t>(seed) ^ (stream * 0x85EBCA6Bu),
                   static_cast<std::uint32_t>(seed >> 32) ^ (stream * 0xC2B2AE35u)};
  constexpr double two_pi = 6.283185307179586476925286766559;
  for (std::size_t i = 0; i < count; i += 2) {
    const Block block = philox4x32({static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b),
                                    static_cast<std::uint32_t>(c),
                                    static_cast<std::uint32_t>(i / 2)},
                                   key);
    const double u1 = uniform01(block[0], block[1]);
    const double u2 = uniform01(block[2], block[3]);
    const double radius = std::sqrt(-2.0 * std::log(u1));
    out[i] = radius * std::cos(two_pi * u2);
    if (i + 1 < count) out[i + 1] = radius * std::sin(two_pi * u2);
  }
}

}  // namespace rng
}  // namespace mfeq

#endif  // MFEQ_RNG_HPP
