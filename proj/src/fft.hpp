#pragma once

// Thin wrapper over Eigen's FFT module (kissfft backend).

#include <complex>
#include <vector>

#include <unsupported/Eigen/FFT>

namespace fmsr::detail {

using cvec = std::vector<std::complex<double>>;

/// Unscaled forward transform: X_k = sum_n x_n e^{-2 pi i k n / N}.
inline cvec fft_forward(const std::vector<double>& x) {
    Eigen::FFT<double> fft;
    cvec out;
    fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
    std::vector<double> in(x);
    fft.fwd(out, in);
    return out;  // N/2 + 1 bins
}

/// Unscaled inverse transform: x_n = sum_k X_k e^{+2 pi i k n / N}.
inline cvec fft_inverse_unscaled(const cvec& X) {
    Eigen::FFT<double> fft;
    fft.SetFlag(Eigen::FFT<double>::Unscaled);
    cvec out;
    fft.inv(out, X);
    return out;
}

}  // namespace fmsr::detail
