#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace nscr {

// Deterministic xoshiro256** generator. std:: distributions are
// implementation-defined, so all draws are produced here to keep outputs
// byte-identical across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) { reseed(seed); }

    void reseed(std::uint64_t seed);

    // Independent substream derived from this generator's seed and a label.
    Rng fork(std::string_view label) const;
    Rng fork(std::string_view label, std::uint64_t index) const;

    std::uint64_t next_u64();

    // Uniform in [0, 1).
    double uniform();
    double uniform(double lo, double hi);

    // Standard normal via Box-Muller with a cached spare.
    double gaussian();
    double gaussian(double mean, double sd) { return mean + sd * gaussian(); }

    bool bernoulli(double p) { return uniform() < p; }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        if (v.size() < 2) return;
        for (std::size_t i = v.size() - 1; i > 0; --i) {
            const auto j = below(i + 1);
            std::swap(v[i], v[j]);
        }
    }

private:
    std::uint64_t state_[4] = {};
    std::uint64_t seed_ = 0;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// FNV-1a, used for substream labels and config hashing.
std::uint64_t fnv1a(std::string_view s);

} // namespace nscr
