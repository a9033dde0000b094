#pragma once

#include <cstdint>
#include <random>

namespace driftguard {

// splitmix64 step; used to derive independent child seeds from a master seed
// so that e.g. batch run i and the panel generator never share a stream.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream = 0) {
    return std::mt19937_64(mix_seed(seed, stream));
}

// Unbiased draw from [0, n) by rejection. Hand-rolled (instead of
// uniform_int_distribution) because the standard leaves that distribution's
// algorithm implementation-defined and sampled artifacts must be identical
// across toolchains.
inline std::uint64_t bounded_uniform(std::mt19937_64& rng, std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;
    std::uint64_t x = rng();
    while (x < threshold) x = rng();
    return x % n;
}

// Uniform double in [0,1) from the engine's top 53 bits; hand-rolled for the
// same cross-toolchain reproducibility reason as bounded_uniform.
inline double uniform_double(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace driftguard
