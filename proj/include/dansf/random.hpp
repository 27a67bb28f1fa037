/**
 * @file random.hpp
 * @brief Seeded random streams.
 *
 * std::mt19937_64 is fully specified by the standard, but the standard
 * distributions are not, so uniform and Gaussian draws are derived from the
 * raw engine output here. Outputs then depend only on the seed and on libm's
 * log/sqrt (sqrt is exact under IEEE 754; log is faithfully rounded on every
 * mainstream libm, which is the single cross-platform caveat).
 */

#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

#include "dansf/core.hpp"

namespace dansf {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Child seed for a named sub-stream, e.g. derive_seed(master, run_index).
inline std::uint64_t derive_seed(std::uint64_t parent, std::initializer_list<std::uint64_t> path) {
    std::uint64_t s = splitmix64(parent);
    for (std::uint64_t p : path) s = splitmix64(s ^ splitmix64(p + 0x632be59bd9b4e019ULL));
    return s;
}

inline std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t child) { return derive_seed(parent, {child}); }

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Standard normal (Marsaglia polar method).
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        has_spare_ = true;
        return u * f;
    }

    double normal(double variance) { return std::sqrt(variance) * normal(); }

    bool bernoulli(double p) { return uniform() < p; }

    /// Uniform integer in [lo, hi].
    std::int64_t integer(std::int64_t lo, std::int64_t hi) {
        const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<std::int64_t>(static_cast<double>(span) * uniform());
    }

    Mat gaussian(Index rows, Index cols, double variance = 1.0) {
        Mat m(rows, cols);
        const double sd = std::sqrt(variance);
        // column-major fill order is part of the determinism contract
        for (Index j = 0; j < cols; ++j)
            for (Index i = 0; i < rows; ++i) m(i, j) = sd * normal();
        return m;
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace dansf
