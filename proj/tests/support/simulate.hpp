#pragma once

// Known-generator simulations used as recovery oracles.

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace hrf::testing {

/// x_t = phi x_{t-1} + e_t, after a burn-in of 500 steps.
inline std::vector<double> simulate_ar1(double phi, std::size_t n, std::uint64_t seed, double mean = 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> e(0.0, 1.0);
    std::vector<double> out(n);
    double x = 0.0;
    for (std::size_t t = 0; t < n + 500; ++t) {
        x = phi * x + e(rng);
        if (t >= 500) out[t - 500] = mean + x;
    }
    return out;
}

/// x_t = e_t + theta e_{t-s}.
inline std::vector<double> simulate_seasonal_ma(double theta, std::size_t s, std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> e(0.0, 1.0);
    std::vector<double> eps(n + s);
    for (double& v : eps) v = e(rng);
    std::vector<double> out(n);
    for (std::size_t t = 0; t < n; ++t) out[t] = eps[t + s] + theta * eps[t];
    return out;
}

inline std::vector<double> white_noise(std::size_t n, std::uint64_t seed, double mean = 0.0, double sd = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> e(mean, sd);
    std::vector<double> out(n);
    for (double& v : out) v = e(rng);
    return out;
}

}  // namespace hrf::testing
