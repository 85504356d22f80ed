#include "hrf/fft.hpp"

#include "hrf/errors.hpp"

#include <bit>
#include <cmath>
#include <numbers>
#include <unordered_map>

namespace hrf::fft {
namespace {

// Bit-reversal order and twiddles for one power-of-two length. Twiddles are
// evaluated directly rather than by repeated multiplication to keep the error
// at O(eps log n).
struct Radix2Plan {
    std::vector<std::size_t> swaps;  // (i, j) pairs flattened
    std::vector<Complex> twiddles;   // exp(-2 pi i k / n), k < n/2
};

// Chirp and the transformed chirp filter for one Bluestein length.
struct BluesteinPlan {
    std::size_t m = 0;
    std::vector<Complex> chirp;
    std::vector<Complex> filter;
};

const Radix2Plan& radix2_plan(std::size_t n) {
    thread_local std::unordered_map<std::size_t, Radix2Plan> cache;
    auto [it, inserted] = cache.try_emplace(n);
    if (!inserted) return it->second;
    Radix2Plan& plan = it->second;
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) {
            plan.swaps.push_back(i);
            plan.swaps.push_back(j);
        }
    }
    plan.twiddles.resize(n / 2);
    for (std::size_t k = 0; k < n / 2; ++k) {
        plan.twiddles[k] = std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n));
    }
    return plan;
}

void radix2_inplace(std::vector<Complex>& a, bool inverse) {
    const std::size_t n = a.size();
    const Radix2Plan& plan = radix2_plan(n);
    for (std::size_t s = 0; s < plan.swaps.size(); s += 2) std::swap(a[plan.swaps[s]], a[plan.swaps[s + 1]]);
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t half = len / 2, step = n / len;
        for (std::size_t start = 0; start < n; start += len) {
            for (std::size_t k = 0; k < half; ++k) {
                const Complex w = inverse ? std::conj(plan.twiddles[k * step]) : plan.twiddles[k * step];
                const Complex u = a[start + k];
                const Complex v = a[start + k + half] * w;
                a[start + k] = u + v;
                a[start + k + half] = u - v;
            }
        }
    }
}

const BluesteinPlan& bluestein_plan(std::size_t n) {
    thread_local std::unordered_map<std::size_t, BluesteinPlan> cache;
    auto [it, inserted] = cache.try_emplace(n);
    if (!inserted) return it->second;
    BluesteinPlan& plan = it->second;
    plan.m = std::bit_ceil(2 * n - 1);
    plan.chirp.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        // k^2 mod 2n keeps the angle argument small for long inputs.
        const auto k2 = static_cast<double>((k * k) % (2 * n));
        plan.chirp[k] = std::polar(1.0, -std::numbers::pi * k2 / static_cast<double>(n));
    }
    plan.filter.assign(plan.m, Complex{});
    plan.filter[0] = std::conj(plan.chirp[0]);
    for (std::size_t k = 1; k < n; ++k) {
        plan.filter[k] = std::conj(plan.chirp[k]);
        plan.filter[plan.m - k] = std::conj(plan.chirp[k]);
    }
    radix2_inplace(plan.filter, false);
    return plan;
}

std::vector<Complex> bluestein(std::span<const Complex> x) {
    const std::size_t n = x.size();
    const BluesteinPlan& plan = bluestein_plan(n);
    const std::size_t m = plan.m;
    std::vector<Complex> a(m);
    for (std::size_t k = 0; k < n; ++k) a[k] = x[k] * plan.chirp[k];
    radix2_inplace(a, false);
    for (std::size_t i = 0; i < m; ++i) a[i] *= plan.filter[i];
    radix2_inplace(a, true);
    std::vector<Complex> out(n);
    const double inv_m = 1.0 / static_cast<double>(m);
    for (std::size_t k = 0; k < n; ++k) out[k] = a[k] * inv_m * plan.chirp[k];
    return out;
}

}  // namespace

std::vector<Complex> dft(std::span<const Complex> x) {
    if (x.empty()) throw InputError("dft of an empty sequence");
    if (std::has_single_bit(x.size())) {
        std::vector<Complex> a(x.begin(), x.end());
        radix2_inplace(a, false);
        return a;
    }
    return bluestein(x);
}

std::vector<Complex> idft(std::span<const Complex> x) {
    std::vector<Complex> conj_in(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) conj_in[i] = std::conj(x[i]);
    auto out = dft(conj_in);
    const double inv_n = 1.0 / static_cast<double>(x.size());
    for (auto& v : out) v = std::conj(v) * inv_n;
    return out;
}

std::vector<Complex> rfft(std::span<const double> x) {
    std::vector<Complex> cx(x.begin(), x.end());
    auto full = dft(cx);
    full.resize(x.size() / 2 + 1);
    return full;
}

std::vector<double> rfft_magnitudes(std::span<const double> x) {
    if (x.size() < 2) throw InputError("rfft_magnitudes needs at least 2 samples");
    const auto bins = rfft(x);
    std::vector<double> mags(bins.size());
    for (std::size_t k = 0; k < bins.size(); ++k) mags[k] = std::abs(bins[k]);
    return mags;
}

}  // namespace hrf::fft
