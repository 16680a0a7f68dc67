#include "waswhistle/rng.hpp"

namespace waswhistle {

uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

uint64_t child_seed(uint64_t master, std::string_view label) {
    uint64_t h = mix64(master);
    for (char c : label)
        h = mix64(h ^ static_cast<uint64_t>(static_cast<unsigned char>(c)));
    return h;
}

void Rng::reseed(uint64_t seed) {
    // expand the seed through splitmix so an all-zero state is impossible
    uint64_t x = seed;
    for (auto& s : s_) s = mix64(x++);
    has_cached_ = false;
    cached_ = 0.0;
}

static inline uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

uint64_t Rng::next_u64() {
    const uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

uint64_t Rng::uniform_int(uint64_t n) {
    if (n == 0) return 0;
    // rejection sampling to avoid modulo bias
    const uint64_t limit = ~uint64_t(0) - (~uint64_t(0) % n);
    uint64_t x;
    do { x = next_u64(); } while (x >= limit);
    return x % n;
}

double Rng::normal() {
    if (has_cached_) {
        has_cached_ = false;
        return cached_;
    }
    double u1, u2;
    do { u1 = uniform(); } while (u1 <= 0.0);
    u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586 * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
}

int Rng::poisson(double lambda) {
    if (lambda <= 0.0) return 0;
    // Knuth's method; fine for the modest rates used here
    const double l = std::exp(-lambda);
    int k = 0;
    double p = 1.0;
    do {
        ++k;
        p *= uniform();
    } while (p > l);
    return k - 1;
}

void Rng::state(uint64_t out[5]) const {
    for (int i = 0; i < 4; ++i) out[i] = s_[i];
    out[4] = has_cached_ ? 1 : 0;
    // the cached normal is dropped on save; a reloaded stream re-derives it
}

void Rng::set_state(const uint64_t in[5]) {
    for (int i = 0; i < 4; ++i) s_[i] = in[i];
    has_cached_ = false;
}

} // namespace waswhistle
