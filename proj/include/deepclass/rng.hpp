#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace deepclass {

/// Seed of the named substream `name` under a root seed (FNV-1a of the name mixed by SplitMix64).
std::uint64_t derive_seed(std::uint64_t root, std::string_view name);

/// Platform-stable generator: mt19937_64 steps with hand-rolled distributions
/// (std:: distributions are implementation-defined).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    Rng(std::uint64_t root, std::string_view stream) : engine_(derive_seed(root, stream)) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n), n > 0, unbiased by rejection.
    std::uint64_t below(std::uint64_t n);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace deepclass
