#pragma once

#include <cstdint>
#include <random>

namespace mgd {

/// splitmix64 finalizer; used to derive independent RNG stream seeds from a
/// single run seed without correlated low bits.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derive the seed of a named sub-stream (perturbation, sampling, noise, ...)
/// from a run seed. Distinct tags give statistically independent streams.
inline std::uint64_t derive_seed(std::uint64_t run_seed, std::uint64_t stream_tag) {
    return splitmix64(run_seed ^ splitmix64(stream_tag));
}

using Rng = std::mt19937_64;

namespace stream_tag {
inline constexpr std::uint64_t init = 0x696e6974;          // parameter initialization
inline constexpr std::uint64_t perturbation = 0x70657274;  // random-code perturbations
inline constexpr std::uint64_t sampling = 0x73616d70;      // random sample order
inline constexpr std::uint64_t noise = 0x6e6f6973;         // cost / update noise
inline constexpr std::uint64_t defects = 0x64656663;       // activation defects
}  // namespace stream_tag

}  // namespace mgd
