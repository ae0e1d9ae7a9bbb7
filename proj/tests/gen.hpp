#ifndef LRW_TESTS_GEN_HPP
#define LRW_TESTS_GEN_HPP

// Hand-rolled generators for property tests. Deliberately independent of
// lrw::Rng so a bug there cannot hide behind its own test inputs.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace gen {

class Source {
public:
    explicit Source(std::uint64_t seed) : eng_(seed) {}

    std::int64_t range(std::int64_t lo, std::int64_t hi)
    {
        return std::uniform_int_distribution<std::int64_t>(lo, hi)(eng_);
    }
    double unit() { return std::uniform_real_distribution<double>(0.0, 1.0)(eng_); }
    bool coin(double p = 0.5) { return unit() < p; }

    template <class T>
    const T& pick(const std::vector<T>& v)
    {
        return v[static_cast<std::size_t>(range(0, static_cast<std::int64_t>(v.size()) - 1))];
    }

    std::string var_name() { return std::string(1, static_cast<char>('a' + range(0, 5))); }

    std::mt19937_64& engine() { return eng_; }

private:
    std::mt19937_64 eng_;
};

// Runs `body(source, case_index)` over `cases` independently seeded cases.
template <class F>
void for_all(std::uint64_t seed, int cases, F body)
{
    for (int i = 0; i < cases; ++i) {
        Source s(seed * 1000003ull + static_cast<std::uint64_t>(i));
        body(s, i);
    }
}

} // namespace gen

#endif
