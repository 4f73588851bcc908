#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "fedgram/error.hpp"

namespace fedgram {

/// What a stream is used for. Part of the stream identity so that two
/// consumers in the same round never share draws.
enum class StreamRole : std::uint64_t {
    data = 1,
    auxiliary = 2,
    root = 3,
    partition = 4,
    malicious_assignment = 5,
    init = 6,
    sampling = 7,
    local_train = 8,
    attack = 9,
    aggregation = 10,
    surrogate = 11,
    baseline = 12,
    test = 99,
};

struct StreamId {
    std::uint64_t round = 0;
    std::uint64_t actor = 0;
    StreamRole role = StreamRole::test;
};

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
    std::uint64_t s = h ^ (v + 0x632be59bd9b4e019ULL + (h << 6) + (h >> 2));
    return splitmix64(s);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace detail

/// Deterministic random stream keyed by (seed, round, actor, role).
///
/// The key is hashed into the state of a xoshiro256** generator, so streams
/// for different (round, actor) pairs are independent of the order in which
/// they are created or consumed. All distributions are implemented here
/// rather than taken from <random>, whose distribution algorithms are not
/// specified and differ between standard libraries.
class RngStream {
public:
    RngStream(std::uint64_t seed, StreamId id) {
        std::uint64_t key = detail::mix(0x5eed5eed5eed5eedULL, seed);
        key = detail::mix(key, id.round);
        key = detail::mix(key, id.actor);
        key = detail::mix(key, static_cast<std::uint64_t>(id.role));
        for (auto& word : state_) {
            word = detail::splitmix64(key);
        }
    }

    explicit RngStream(std::uint64_t seed) : RngStream(seed, StreamId{}) {}

    std::uint64_t next_u64() {
        const std::uint64_t result = detail::rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = detail::rotl(state_[3], 45);
        return result;
    }

    /// Uniform on [0, 1) with 53 bits of resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Unbiased integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        require(n > 0, "below(0) is undefined");
        // Lemire's nearly-divisionless method.
        std::uint64_t x = next_u64();
        __uint128_t m = static_cast<__uint128_t>(x) * n;
        auto low = static_cast<std::uint64_t>(m);
        if (low < n) {
            const std::uint64_t threshold = (0 - n) % n;
            while (low < threshold) {
                x = next_u64();
                m = static_cast<__uint128_t>(x) * n;
                low = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    /// Standard normal draw (Marsaglia polar method).
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u = 0.0;
        double v = 0.0;
        double s = 0.0;
        do {
            u = uniform(-1.0, 1.0);
            v = uniform(-1.0, 1.0);
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double factor = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * factor;
        has_spare_ = true;
        return u * factor;
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Gamma(shape, 1) draw (Marsaglia-Tsang, with the shape<1 boost).
    double gamma(double shape) {
        require(shape > 0.0, "gamma shape must be positive");
        if (shape < 1.0) {
            const double u = uniform();
            return gamma(shape + 1.0) * std::pow(u > 0.0 ? u : 0x1.0p-53, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = 0.0;
            double v = 0.0;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform();
            if (u < 1.0 - 0.0331 * x * x * x * x) {
                return d * v;
            }
            if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) {
                return d * v;
            }
        }
    }

    /// Dirichlet(alpha, ..., alpha) draw of the given dimension.
    std::vector<double> dirichlet(double alpha, std::size_t dim) {
        std::vector<double> out(dim);
        double total = 0.0;
        for (auto& x : out) {
            x = gamma(alpha);
            total += x;
        }
        if (total <= 0.0) {
            // Every component underflowed (tiny alpha); fall back to a single
            // uniformly chosen vertex, which is the alpha->0 limit.
            std::fill(out.begin(), out.end(), 0.0);
            out[below(dim)] = 1.0;
            return out;
        }
        for (auto& x : out) {
            x /= total;
        }
        return out;
    }

    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    template <typename T>
    void shuffle(std::vector<T>& items) {
        shuffle(std::span<T>(items));
    }

    /// k distinct indices from [0, n), in increasing order.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k) {
        require(k <= n, "cannot sample more items than available");
        std::vector<std::size_t> pool(n);
        for (std::size_t i = 0; i < n; ++i) {
            pool[i] = i;
        }
        // Partial Fisher-Yates.
        for (std::size_t i = 0; i < k; ++i) {
            const auto j = i + static_cast<std::size_t>(below(n - i));
            std::swap(pool[i], pool[j]);
        }
        pool.resize(k);
        std::sort(pool.begin(), pool.end());
        return pool;
    }

private:
    std::uint64_t state_[4]{};
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace fedgram
