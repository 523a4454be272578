#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fmsr/grid.hpp"

namespace fmsr {

inline constexpr double kEarthRadiusKm = 6371.0;

/// Zonal power spectrum, area-weighted over latitude rows.
///
/// Per row the one-sided periodogram is normalized so its sum over k equals
/// the row's mean square; rows are then averaged with area weights. Hence
/// sum_{k>=1} energy equals the area-weighted zonal variance.
struct Spectrum {
    std::vector<std::string> channels;
    std::size_t n_lon = 0;
    double ref_lat_deg = 0.0;
    std::vector<std::vector<double>> energy;  // [channel][k], k = 0..n_lon/2

    std::size_t n_k() const { return n_lon / 2 + 1; }
    /// 2 pi R cos(ref_lat) / k; infinite at k = 0.
    double wavelength_km(std::size_t k) const;
};

Spectrum zonal_power_spectrum(const Field& f, double ref_lat_deg = 0.0);

/// Zonal low-pass: every row's Fourier coefficients are scaled by
/// exp(-(k / k0)^2). Used to make oversmoothed stand-ins for foreign sources.
Field zonal_lowpass(const Field& f, double k0);

/// Mean energy over samples (ensemble members, times). Same k grid required.
Spectrum average_spectra(std::span<const Spectrum> spectra);

/// Highest wavenumber resolved by the coarse grid.
inline std::size_t cutoff_wavenumber(std::size_t coarse_n_lon) { return coarse_n_lon / 2; }

struct SpectrumRatio {
    std::vector<std::string> channels;
    std::vector<std::vector<double>> ratio;  // [channel][k]
    std::size_t cutoff = 0;
    bool above_cutoff(std::size_t k) const { return k > cutoff; }
    /// Median ratio over cutoff < k <= n_lon/2.
    double median_above_cutoff(std::size_t channel) const;
};

/// Elementwise model / reference for k >= 1. Throws ValidationError on
/// mismatched grids or zero reference energy.
SpectrumRatio spectrum_ratio(const Spectrum& model, const Spectrum& reference, std::size_t cutoff);

/// Least-squares slope of log E against log k over k in [k_lo, k_hi].
double fit_spectral_slope(const Spectrum& s, std::size_t channel, std::size_t k_lo, std::size_t k_hi);

/// CSV columns: channel,k,wavelength_km,energy. The cutoff is recorded in
/// a leading "# cutoff_k=" comment line when given.
void write_spectrum_csv(const std::filesystem::path& path, const Spectrum& s, std::optional<std::size_t> cutoff);

}  // namespace fmsr
