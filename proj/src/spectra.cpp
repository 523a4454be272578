#include "fmsr/spectra.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

#include "fft.hpp"
#include "fmsr/errors.hpp"

namespace fmsr {

double Spectrum::wavelength_km(std::size_t k) const {
    if (k == 0) return std::numeric_limits<double>::infinity();
    return 2.0 * std::numbers::pi * kEarthRadiusKm * std::cos(ref_lat_deg * std::numbers::pi / 180.0) /
           static_cast<double>(k);
}

Spectrum zonal_power_spectrum(const Field& f, double ref_lat_deg) {
    Spectrum s;
    s.channels = f.catalog().names();
    s.n_lon = f.n_lon();
    s.ref_lat_deg = ref_lat_deg;
    const std::size_t N = f.n_lon();
    const std::size_t K = s.n_k();
    const double inv_n2 = 1.0 / (static_cast<double>(N) * static_cast<double>(N));
    const auto& w = f.grid().area_weight();
    s.energy.assign(f.n_channels(), std::vector<double>(K, 0.0));
    std::vector<double> row(N);
    for (std::size_t c = 0; c < f.n_channels(); ++c) {
        const auto plane = f.channel(c);
        for (std::size_t j = 0; j < f.n_lat(); ++j) {
            std::copy_n(plane.begin() + j * N, N, row.begin());
            const auto X = detail::fft_forward(row);
            // Row weight n_lon * w_j sums to one over rows.
            const double rw = static_cast<double>(N) * w[j];
            for (std::size_t k = 0; k < K; ++k) {
                const bool paired = k != 0 && 2 * k != N;
                s.energy[c][k] += rw * (paired ? 2.0 : 1.0) * std::norm(X[k]) * inv_n2;
            }
        }
    }
    return s;
}

Field zonal_lowpass(const Field& f, double k0) {
    if (!(k0 > 0.0)) throw ValidationError("zonal_lowpass: k0 must be positive");
    Field out = f;
    const std::size_t N = f.n_lon();
    std::vector<double> row(N);
    for (std::size_t c = 0; c < f.n_channels(); ++c) {
        auto plane = out.channel(c);
        for (std::size_t j = 0; j < f.n_lat(); ++j) {
            std::copy_n(plane.begin() + j * N, N, row.begin());
            auto X = detail::fft_forward(row);
            for (std::size_t k = 0; k < X.size(); ++k) X[k] *= std::exp(-std::pow(static_cast<double>(k) / k0, 2));
            // Rebuild the full conjugate-symmetric spectrum for the inverse.
            detail::cvec full(N);
            for (std::size_t k = 0; k < N; ++k) full[k] = k < X.size() ? X[k] : std::conj(X[N - k]);
            const auto x = detail::fft_inverse_unscaled(full);
            for (std::size_t i = 0; i < N; ++i) plane[j * N + i] = x[i].real() / static_cast<double>(N);
        }
    }
    return out;
}

Spectrum average_spectra(std::span<const Spectrum> spectra) {
    if (spectra.empty()) throw ValidationError("average_spectra: no spectra");
    Spectrum out = spectra.front();
    for (std::size_t i = 1; i < spectra.size(); ++i) {
        const auto& s = spectra[i];
        if (s.n_lon != out.n_lon || s.channels != out.channels) {
            throw ValidationError("average_spectra: spectra differ in channels or wavenumbers");
        }
        for (std::size_t c = 0; c < out.energy.size(); ++c)
            for (std::size_t k = 0; k < out.n_k(); ++k) out.energy[c][k] += s.energy[c][k];
    }
    for (auto& e : out.energy)
        for (double& v : e) v /= static_cast<double>(spectra.size());
    return out;
}

double SpectrumRatio::median_above_cutoff(std::size_t channel) const {
    std::vector<double> v;
    for (std::size_t k = cutoff + 1; k < ratio[channel].size(); ++k) v.push_back(ratio[channel][k]);
    if (v.empty()) throw ValidationError("median_above_cutoff: no wavenumbers above the cutoff");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

SpectrumRatio spectrum_ratio(const Spectrum& model, const Spectrum& reference, std::size_t cutoff) {
    if (model.n_lon != reference.n_lon || model.channels != reference.channels) {
        throw ValidationError("spectrum_ratio: model and reference differ in channels or wavenumbers");
    }
    SpectrumRatio r;
    r.channels = model.channels;
    r.cutoff = cutoff;
    r.ratio.assign(model.energy.size(), std::vector<double>(model.n_k(), std::numeric_limits<double>::quiet_NaN()));
    for (std::size_t c = 0; c < model.energy.size(); ++c) {
        for (std::size_t k = 1; k < model.n_k(); ++k) {
            const double ref = reference.energy[c][k];
            if (!(ref > 0.0)) {
                throw ValidationError("spectrum_ratio: reference energy is zero for " + model.channels[c] +
                                      " at k=" + std::to_string(k));
            }
            r.ratio[c][k] = model.energy[c][k] / ref;
        }
    }
    return r;
}

double fit_spectral_slope(const Spectrum& s, std::size_t channel, std::size_t k_lo, std::size_t k_hi) {
    if (k_lo < 1 || k_hi >= s.n_k() || k_hi <= k_lo) throw ValidationError("fit_spectral_slope: bad k range");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(k_hi - k_lo + 1);
    for (std::size_t k = k_lo; k <= k_hi; ++k) {
        const double e = s.energy[channel][k];
        if (!(e > 0.0)) throw ValidationError("fit_spectral_slope: non-positive energy");
        const double x = std::log(static_cast<double>(k));
        const double y = std::log(e);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

void write_spectrum_csv(const std::filesystem::path& path, const Spectrum& s, std::optional<std::size_t> cutoff) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot open " + path.string() + " for writing");
    if (cutoff) out << "# cutoff_k=" << *cutoff << '\n';
    out << "channel,k,wavelength_km,energy\n";
    out.precision(10);
    for (std::size_t c = 0; c < s.channels.size(); ++c) {
        for (std::size_t k = 0; k < s.n_k(); ++k) {
            out << s.channels[c] << ',' << k << ',';
            if (k == 0) out << "inf";
            else out << s.wavelength_km(k);
            out << ',' << s.energy[c][k] << '\n';
        }
    }
}

}  // namespace fmsr
