#pragma once
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace seqlab {

// One logical random stream per concern, so e.g. how many dropout masks a
// model draws can never perturb the batch order.
enum class Stream : uint64_t { init = 1, dropout = 2, batch_order = 3, sampling = 4 };

namespace detail {
inline uint64_t mix64(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}
}  // namespace detail

// Counter-based generator: output is a pure function of (seed, stream,
// counter), so any draw can be replayed without replaying the ones before it.
struct PrngState {
    uint64_t seed = 0;
    Stream stream = Stream::init;
    uint64_t counter = 0;

    PrngState() = default;
    PrngState(uint64_t seed, Stream stream, uint64_t counter = 0)
        : seed(seed), stream(stream), counter(counter) {}

    static uint64_t value_at(uint64_t seed, Stream stream, uint64_t counter) {
        const uint64_t root =
            detail::mix64(seed ^ (static_cast<uint64_t>(stream) * 0xa0761d6478bd642fULL));
        return detail::mix64(root + (counter + 1) * 0x9e3779b97f4a7c15ULL);
    }

    uint64_t next_u64() { return value_at(seed, stream, counter++); }

    // [0, 1)
    double next_uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // N(0, 1) via Box-Muller; consumes two counters per draw.
    double next_normal() {
        const double u1 = next_uniform();
        const double u2 = next_uniform();
        const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
        return r * std::cos(2.0 * std::numbers::pi * u2);
    }

    // Uniform index in [0, n); n >= 1.
    uint64_t next_index(uint64_t n) { return next_u64() % n; }

    // Fisher-Yates permutation of 0..n-1.
    std::vector<int64_t> permutation(int64_t n) {
        std::vector<int64_t> p(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) p[static_cast<size_t>(i)] = i;
        for (int64_t i = n - 1; i > 0; --i) {
            const auto j = static_cast<int64_t>(next_index(static_cast<uint64_t>(i) + 1));
            std::swap(p[static_cast<size_t>(i)], p[static_cast<size_t>(j)]);
        }
        return p;
    }
};

// Fans one user-facing seed into the four streams.
inline PrngState stream_rng(uint64_t seed, Stream s) { return PrngState(seed, s); }

}  // namespace seqlab
