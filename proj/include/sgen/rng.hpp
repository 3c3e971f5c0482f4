#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace sgen {

// Seeded generator with portable uniform/normal draws (the standard
// distributions are implementation-defined, these are not).
class Rng {
  public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    // Independent stream derived from (seed, index), e.g. one per training
    // iteration, so work can be replayed or resumed from any index.
    static Rng stream(std::uint64_t seed, std::uint64_t index) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), 0x5eedu};
        Rng r;
        r.engine_.seed(seq);
        return r;
    }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    bool bernoulli(double p) { return uniform() < p; }

    // Standard normal via Box-Muller; consumes two uniforms per draw.
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) {
            u1 = uniform();
        }
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    std::mt19937_64& engine() { return engine_; }

  private:
    std::mt19937_64 engine_;
};

}  // namespace sgen
