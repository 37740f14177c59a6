#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace sabnn {

// Deterministic RNG. Gaussian draws use plain Box-Muller (one value per
// call, no cached spare) so a fixed seed always yields the same stream
// regardless of how draws are interleaved.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // uniform in [0, 1)
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    // uniform in (0, 1]
    double uniform_open0() {
        return (static_cast<double>(gen_() >> 11) + 1.0) * 0x1.0p-53;
    }

    double normal() {
        const double u1 = uniform_open0();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // uniform integer in [0, n)
    std::uint64_t uniform_int(std::uint64_t n) {
        // modulo bias is irrelevant at the sizes used here
        return gen_() % n;
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace sabnn
