#pragma once
#include <cstdint>
#include <cmath>
#include <string_view>

namespace waswhistle {

// Counter-free xoshiro256** generator with explicit float helpers so that
// results are identical across standard libraries and platforms.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) { reseed(seed); }

    void reseed(uint64_t seed);

    uint64_t next_u64();

    // uniform in [0, 1)
    double uniform() { return (next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // integer in [0, n)
    uint64_t uniform_int(uint64_t n);

    // standard normal, Box-Muller with cached second value
    double normal();

    double normal(double mean, double sd) { return mean + sd * normal(); }

    int poisson(double lambda);

    // serialization for checkpoints
    void state(uint64_t out[5]) const;
    void set_state(const uint64_t in[5]);

private:
    uint64_t s_[4];
    double cached_ = 0.0;
    bool has_cached_ = false;
};

// SplitMix64 mix step; used for child-seed derivation.
uint64_t mix64(uint64_t x);

// Stable child seed from a master seed and a label such as "extractor/n=500/rep=2".
uint64_t child_seed(uint64_t master, std::string_view label);

} // namespace waswhistle
