#pragma once

// Direct O(n^2) DFT, used as the independent oracle for the FFT paths.

#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <vector>

namespace hrf::testing {

inline std::vector<std::complex<double>> naive_dft(std::span<const double> x) {
    const std::size_t n = x.size();
    std::vector<std::complex<double>> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        std::complex<double> acc{};
        for (std::size_t t = 0; t < n; ++t) {
            const double angle = -2.0 * std::numbers::pi * static_cast<double>((k * t) % n) / static_cast<double>(n);
            acc += x[t] * std::complex<double>(std::cos(angle), std::sin(angle));
        }
        out[k] = acc;
    }
    return out;
}

inline std::vector<double> naive_rfft_magnitudes(std::span<const double> x) {
    auto full = naive_dft(x);
    std::vector<double> mags(x.size() / 2 + 1);
    for (std::size_t k = 0; k < mags.size(); ++k) mags[k] = std::abs(full[k]);
    return mags;
}

}  // namespace hrf::testing
