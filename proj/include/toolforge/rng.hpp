#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace toolforge {

/// Seeded generator whose output is identical on every platform.
/// std::mt19937_64's sequence is fixed by the standard, but the standard
/// distributions are not, so bounded draws are done here by rejection.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform integer in [0, bound). bound must be > 0.
    std::uint64_t below(std::uint64_t bound) {
        const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % bound;
    }

    /// Uniform double in [0, 1) with 53 bits of precision.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Partial Fisher-Yates: first min(n, items.size()) elements become a
    /// uniform sample without replacement, in draw order.
    template <typename T>
    std::vector<T> sample(std::vector<T> items, size_t n) {
        if (n > items.size()) n = items.size();
        for (size_t i = 0; i < n; ++i) {
            size_t j = i + static_cast<size_t>(below(items.size() - i));
            std::swap(items[i], items[j]);
        }
        items.resize(n);
        return items;
    }

private:
    std::mt19937_64 engine_;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Child seed for a named stage (FNV-1a over the label, mixed with the base).
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view label, std::uint64_t index = 0) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : label) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return splitmix64(splitmix64(base ^ h) + index);
}

}  // namespace toolforge
