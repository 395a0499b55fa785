#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace ragforget {

// FNV-1a 64-bit, used for seed derivation and data fingerprints.
constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ull;

inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t seed = kFnvOffset) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= kFnvPrime;
    }
    return h;
}

inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t seed = kFnvOffset) {
    return fnv1a64(s.data(), s.size(), seed);
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Every seeded component draws from a named sub-seed of one root seed, so
// components stay independently reproducible.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view name) {
    return splitmix64(root ^ fnv1a64(name));
}

inline std::uint64_t derive_seed(std::uint64_t root, std::string_view name,
                                 std::uint64_t index) {
    return splitmix64(derive_seed(root, name) ^ splitmix64(index));
}

// Deterministic RNG. mt19937_64 output is pinned by the standard; the
// transforms below are hand-rolled because std::*_distribution is not
// specified bit-for-bit across library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(splitmix64(seed)) {}

    std::uint64_t next_u64() { return gen_(); }

    // Unbiased integer in [0, n). n must be > 0.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t v;
        do {
            v = gen_();
        } while (v >= limit);
        return v % n;
    }

    std::size_t index(std::size_t n) { return static_cast<std::size_t>(below(n)); }

    // Uniform in [0, 1) with 53 bits of precision.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller; one spare cached.
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1, u2;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[index(i)]);
        }
    }

    // k distinct positions out of n, in draw order.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k) {
        std::vector<std::size_t> pool(n);
        for (std::size_t i = 0; i < n; ++i) pool[i] = i;
        if (k > n) k = n;
        std::vector<std::size_t> out;
        out.reserve(k);
        for (std::size_t d = 0; d < k; ++d) {
            const std::size_t j = index(pool.size());
            out.push_back(pool[j]);
            pool[j] = pool.back();
            pool.pop_back();
        }
        return out;
    }

private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace ragforget
