#pragma once

// Shared error taxonomy and small numeric helpers used across the library.
//
// Error classes map onto the CLI exit codes: ConfigError -> 1 (usage),
// DataError -> 2 (bad input data). Anything else escaping to main is
// treated as an internal invariant violation -> 3.

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace fairmip {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Uniform double in [0, 1). std::uniform_real_distribution is not
// bit-reproducible across standard libraries, so we build from raw
// mt19937_64 output (53 mantissa bits).
inline double rng_unit(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Bounded draw in [0, n). Modulo bias is irrelevant for our uses; what
// matters is that the stream is identical on every platform.
inline std::size_t rng_below(std::mt19937_64& rng, std::size_t n) {
    return static_cast<std::size_t>(rng() % n);
}

// Fisher-Yates with the portable bounded draw above.
template <typename T>
void rng_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::swap(v[i - 1], v[rng_below(rng, i)]);
    }
}

// Per-tree / per-repetition seed derivation (splitmix64 finalizer over
// seed XOR a salted index). Declared here so logs and tests can state
// exactly which stream a consumer drew from.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed ^ (0x9E3779B97F4A7C15ULL * (index + 1));
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Shortest round-trip decimal form of a double (used by the LP writer,
// CSV outputs and reports so that re-parsing is exact).
std::string format_double(double v);

} // namespace fairmip
