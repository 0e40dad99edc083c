#pragma once

#include <cstdint>
#include <vector>

namespace agrg {

// Splitmix64 generator. Every random decision in the project flows through
// one of these, seeded from the run seed, so runs are reproducible bit-for-bit.
struct SplitMix64 {
    uint64_t state;

    explicit SplitMix64(uint64_t seed) : state(seed) {}

    uint64_t next() {
        uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    uint64_t below(uint64_t n) { return next() % n; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }
};

// Derive an independent substream seed from (seed, tag). Used to keep the
// random draws of one component (labels, specs, background, init) stable
// when another component consumes a different number of draws.
inline uint64_t mix_seed(uint64_t seed, uint64_t tag) {
    SplitMix64 r(seed ^ (0x9e3779b97f4a7c15ULL * (tag + 1)));
    return r.next();
}

}  // namespace agrg
