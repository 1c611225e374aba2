#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace pfl {

// Derives an independent stream seed from a root seed and a path-like name
// such as "client/3/round/7". Pure function of its inputs.
std::uint64_t derive_seed(std::uint64_t root, std::string_view name);

// Portable random source: mt19937_64 has a standardized output sequence and
// the conversions below avoid the implementation-defined std distributions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    Rng(std::uint64_t root, std::string_view name) : engine_(derive_seed(root, name)) {}

    std::uint64_t next() { return engine_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller.
    double normal();

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::swap(items[i - 1], items[below(i)]);
        }
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace pfl
