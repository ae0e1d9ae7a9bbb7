#ifndef LRW_RNG_HPP
#define LRW_RNG_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

namespace lrw {

constexpr std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// std::mt19937_64 seeded with splitmix64(seed). The distribution mappings are
// written out here (rather than using <random> distributions) so draws are
// identical across standard library implementations.
//
// Substream identity: stream(master, index) seeds the engine with
// splitmix64(splitmix64(master) XOR index), so every (master, index) pair is independent of
// the order in which streams are created.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(splitmix64(seed)) {}

    static Rng stream(std::uint64_t master, std::uint64_t index) { return Rng(splitmix64(master) ^ index); }

    std::uint64_t next() { return engine_(); }

    // [0, 1)
    double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Inclusive on both ends, unbiased by rejection.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi)
    {
        if (hi <= lo)
            return lo;
        const std::uint64_t range = static_cast<std::uint64_t>(hi - lo) + 1;
        if (range == 0)
            return static_cast<std::int64_t>(next());
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                    std::numeric_limits<std::uint64_t>::max() % range;
        std::uint64_t x;
        do {
            x = next();
        } while (x >= limit);
        return lo + static_cast<std::int64_t>(x % range);
    }

    bool bernoulli(double p) { return uniform01() < p; }

    double exponential(double rate) { return -std::log1p(-uniform01()) / rate; }

    double normal()
    {
        double u1 = uniform01();
        while (u1 <= 0.0)
            u1 = uniform01();
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

private:
    std::mt19937_64 engine_;
};

} // namespace lrw

#endif // LRW_RNG_HPP
