#pragma once

#include <complex>
#include <span>
#include <vector>

namespace hrf::fft {

using Complex = std::complex<double>;

/// Forward DFT, X[k] = sum_t x[t] exp(-2 pi i k t / n), for any n >= 1.
/// Powers of two use an iterative radix-2 transform; other lengths go
/// through Bluestein's chirp-z reduction.
[[nodiscard]] std::vector<Complex> dft(std::span<const Complex> x);

/// Inverse of `dft` (includes the 1/n factor).
[[nodiscard]] std::vector<Complex> idft(std::span<const Complex> x);

/// The first n/2+1 bins of the DFT of a real sequence.
[[nodiscard]] std::vector<Complex> rfft(std::span<const double> x);

/// |rfft(x)|. Throws InputError when x has fewer than two samples.
[[nodiscard]] std::vector<double> rfft_magnitudes(std::span<const double> x);

}  // namespace hrf::fft
