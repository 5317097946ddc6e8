#pragma once
// Deterministic random streams.
//
// Every random draw in the library goes through this wrapper. Raw engine
// bits are converted to doubles and integers by hand instead of through
// std::uniform_*_distribution, whose output is implementation-defined:
// the same seed must produce the same dataset, the same initial weights,
// and the same rollouts on every platform.

#include <cstdint>
#include <random>

namespace convpol {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Independent stream seed for worker/record `index` under a global seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    return splitmix64(seed ^ splitmix64(index + 1));
}

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1), 53 random bits.
    double uniform01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Uniform integer in [lo, hi], inclusive. Modulo bias is irrelevant at
    // the range sizes used here; determinism is what matters.
    int uniform_int(int lo, int hi) {
        const auto range = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(next_u64() % range);
    }

    bool bernoulli(double p) { return uniform01() < p; }

  private:
    std::mt19937_64 engine_;
};

}  // namespace convpol
