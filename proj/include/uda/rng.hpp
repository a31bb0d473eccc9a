#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace uda {

// xoshiro256** (Blackman/Vigna) seeded through splitmix64.
//
// Every random draw in the library (dataset generation, weight init,
// shuffles) comes from this generator, never from the platform RNG, so
// results reproduce bit-for-bit across machines and implementations.
// Derivations used below:
//   next_double  = (next_u64() >> 11) * 2^-53            (uniform [0,1))
//   normal       = sqrt(-2 ln(1-u1)) * cos(2*pi*u2)       (Box-Muller,
//                  two fresh uniforms per call, no caching)
//   next_below(n)= high 64 bits of next_u64() * n         (multiply-shift)
//   shuffle      = Fisher-Yates from the back
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();
    double next_double();
    double uniform(double lo, double hi);
    double normal();
    std::size_t next_below(std::size_t n);

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = next_below(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::array<std::uint64_t, 4> state_;
};

}  // namespace uda
