#include "orchestra/rng.hpp"

#include <cmath>
#include <numbers>

#include "orchestra/errors.hpp"

namespace orchestra {

uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

namespace {
inline uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
}  // namespace

RngStream::RngStream(uint64_t seed) {
    uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64(sm);
}

RngStream::RngStream(uint64_t master_seed, std::string_view component, int64_t agent, int64_t round) {
    uint64_t h = fnv1a64(component);
    uint64_t st = master_seed ^ h;
    uint64_t s0 = splitmix64(st);
    st = s0 ^ (static_cast<uint64_t>(agent) + 0x9E3779B97F4A7C15ULL);
    uint64_t s1 = splitmix64(st);
    st = s1 ^ (static_cast<uint64_t>(round) + 0x2545F4914F6CDD1DULL);
    uint64_t s2 = splitmix64(st);
    uint64_t sm = s2;
    for (auto& w : s_) w = splitmix64(sm);
}

uint64_t RngStream::next_u64() {
    // xoshiro256**
    uint64_t result = rotl(s_[1] * 5, 7) * 9;
    uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double RngStream::uniform01() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform01();
}

uint64_t RngStream::bounded(uint64_t n) {
    if (n == 0) throw contract_error("RngStream::bounded: n must be > 0");
    return next_u64() % n;
}

bool RngStream::coin() { return (next_u64() & 1ULL) != 0; }

double RngStream::gaussian() {
    double u1 = uniform01();
    double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double RngStream::gamma(double shape) {
    if (!(shape > 0.0)) throw contract_error("RngStream::gamma: shape must be > 0");
    if (shape < 1.0) {
        // Boost to shape+1, then scale by U^(1/shape).
        double g = gamma(shape + 1.0);
        double u = uniform01();
        return g * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x = gaussian();
        double v = 1.0 + c * x;
        if (v <= 0.0) continue;
        v = v * v * v;
        double u = uniform01();
        if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) {
            return d * v;
        }
    }
}

std::vector<double> RngStream::dirichlet(double alpha, int k) {
    if (!(alpha > 0.0) || k < 1) throw contract_error("RngStream::dirichlet: alpha > 0 and k >= 1 required");
    std::vector<double> w(static_cast<size_t>(k));
    double total = 0.0;
    for (auto& x : w) {
        x = gamma(alpha);
        total += x;
    }
    if (total <= 0.0) {
        // All draws underflowed to zero (possible for tiny alpha); fall back to
        // a single random corner of the simplex, which is the limit behaviour.
        size_t corner = static_cast<size_t>(bounded(static_cast<uint64_t>(k)));
        for (auto& x : w) x = 0.0;
        w[corner] = 1.0;
        return w;
    }
    for (auto& x : w) x /= total;
    return w;
}

}  // namespace orchestra
