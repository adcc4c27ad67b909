#pragma once

// Seed derivation and inverse-transform sampling.
//
// Every random value in the library flows from one experiment-level seed
// through derive_seed(), a splittable counter-based scheme: runs never share
// generator state, so executing them in any order (or in parallel) yields the
// same values. The draw helpers use std::mt19937_64 (whose output sequence is
// fixed by the standard) plus our own transforms, so results are reproducible
// across platforms and standard libraries.

#include <cstdint>
#include <random>

namespace expcmp::rng {

// SplitMix64 step; the standard 64-bit mixer.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// FNV-1a over a string, for folding identifiers into seeds.
inline std::uint64_t hash_str(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Per-run seed from (experiment seed, algorithm index, instance index,
// run index). Extra stream values (retries, substreams) chain the same way.
// Kept below 2^63 so external solvers parsing the seed as a signed 64-bit
// integer never overflow.
inline std::uint64_t derive_seed(std::uint64_t experiment_seed, std::uint64_t algorithm,
                                 std::uint64_t instance, std::uint64_t run,
                                 std::uint64_t stream = 0) {
    std::uint64_t h = mix64(experiment_seed);
    h = mix64(h ^ algorithm);
    h = mix64(h ^ instance);
    h = mix64(h ^ run);
    if (stream != 0) h = mix64(h ^ stream);
    return h & 0x7fffffffffffffffULL;
}

inline std::mt19937_64 make_engine(std::uint64_t seed) {
    return std::mt19937_64(seed);
}

// Uniform draw on the open interval (0, 1); 53-bit resolution.
inline double next_uniform(std::mt19937_64& eng) {
    return static_cast<double>(eng() >> 11) * 0x1.0p-53 + 0x1.0p-54;
}

// Inverse-transform draws (see tdist.hpp for the quantile function).
double next_normal(std::mt19937_64& eng, double location, double scale);
double next_lognormal(std::mt19937_64& eng, double location, double scale);
double next_uniform_range(std::mt19937_64& eng, double low, double width);

// Unbiased-enough bounded integer in [0, n) via 128-bit multiply-shift;
// deterministic across platforms.
inline std::uint64_t next_below(std::mt19937_64& eng, std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(eng()) * n) >> 64);
}

}  // namespace expcmp::rng
