#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace orchestra {

// Deterministic named-stream RNG.
//
// Every random draw in a run comes from a stream addressed by
// (component name, agent id, round). Stream seeds derive from the master
// seed as
//
//   h  = fnv1a64(component)
//   s0 = splitmix64(master ^ h)
//   s1 = splitmix64(s0 ^ (agent + 0x9E3779B97F4A7C15))
//   s2 = splitmix64(s1 ^ (round + 0x2545F4914F6CDD1D))
//
// and s2 seeds a xoshiro256** generator via four splitmix64 steps.
// Two runs with the same master seed consume identical streams no matter
// how work is scheduled, which is what makes parallel phase execution
// reproducible.

uint64_t splitmix64(uint64_t& state);
uint64_t fnv1a64(std::string_view s);

class RngStream {
public:
    RngStream() : RngStream(0) {}
    explicit RngStream(uint64_t seed);
    RngStream(uint64_t master_seed, std::string_view component, int64_t agent, int64_t round);

    uint64_t next_u64();

    // Uniform on (0,1], 53-bit resolution.
    double uniform01();
    double uniform(double lo, double hi);
    // Uniform integer in [0, n). n must be > 0.
    uint64_t bounded(uint64_t n);
    bool coin();

    // Standard normal via Box-Muller (two uniforms per draw, no spare cached).
    double gaussian();
    // Gamma(shape, 1) via Marsaglia-Tsang; shape > 0.
    double gamma(double shape);
    // Dirichlet(alpha * 1_k), returned as a probability vector of length k.
    std::vector<double> dirichlet(double alpha, int k);

    // In-place Fisher-Yates.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(bounded(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t s_[4];
};

}  // namespace orchestra
