#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "fmsr/grid.hpp"
#include "fmsr/rng.hpp"

namespace fmsr {

/// Spectral and climatological shape of one synthetic channel.
struct ChannelSpec {
    double slope = -3.0;      // zonal power spectrum ~ k^slope
    double amplitude = 1.0;   // anomaly standard deviation
    double offset = 0.0;      // global mean
    double meridional = 0.0;  // mean profile offset + meridional * cos(lat)
};

/// Gaussian-random-field truth generator. Channels are independent.
struct GRFConfig {
    std::vector<ChannelSpec> channels;  // one per catalog entry, catalog order
    double phi = 0.7;                   // lag-1 autocorrelation of anomalies
    std::uint64_t seed = 0;
    std::int64_t start_time = 0;        // hours
    int step_hours = 24;

    void validate(std::size_t n_channels) const;
    nlohmann::json to_json() const;
    static GRFConfig from_json(const nlohmann::json& j);
};

/// Six-channel desk-scale world: t2m, u10m, q700, t850, u850, z500.
CatalogPtr default_catalog();
GRFConfig default_grf_config(const ChannelCatalog& catalog, std::uint64_t seed);

/// One zero-mean, unit-variance GRF plane on `grid` with zonal spectrum
/// ~ k^slope. Synthesized on a (2 n_lat) x n_lon index-space torus; the first
/// n_lat rows are kept so the field is not periodic in latitude.
std::vector<double> grf_plane(const GridSpec& grid, double slope, Rng& rng);

/// Deterministic mean state offset + meridional * cos(lat) per channel.
Field mean_state(GridPtr grid, CatalogPtr catalog, const GRFConfig& cfg);

/// Truth sequence: mean state plus AR(1)-in-time GRF anomalies,
/// a_t = phi a_{t-1} + sqrt(1 - phi^2) g_t. Timestamps are start_time +
/// t * step_hours.
std::vector<Field> generate_truth(GridPtr grid, CatalogPtr catalog, const GRFConfig& cfg, std::size_t n_times);

/// Stochastic stand-in for an autoregressive forecast model on the coarse grid.
/// One step: shift east by `advection` cells (linear interpolation, periodic),
/// relax toward the climatology, then add member-keyed spectral noise with
/// per-channel standard deviation noise_scale * channel_std[c].
struct ToyForecastModel {
    double advection = 0.0;
    double relaxation = 0.3;
    double noise_scale = 0.7;
    std::vector<double> channel_std;  // per channel
    std::vector<double> slopes;       // noise spectrum per channel
    Field climatology;                // coarse-grid mean state
    std::uint64_t seed = 0;

    void validate(const Field& state) const;
    /// Advances one step. `rng` supplies the noise.
    Field step(const Field& state, Rng& rng) const;
};

/// Calibrated emulator for a GRF world: relaxation 1 - phi and noise
/// sqrt(1 - phi^2) times the anomaly std reproduce the truth's AR(1) law.
ToyForecastModel calibrated_emulator(const GRFConfig& cfg, const Field& coarse_mean, std::vector<double> coarse_std,
                                     std::uint64_t seed);

/// M member trajectories of T steps from a coarse initial state. Member m,
/// lead l draws its noise from Rng::keyed(model.seed, {init_time, m, l}).
EnsembleSet emulate_forecast(const Field& initial, const ToyForecastModel& model, std::size_t T, std::size_t M);

/// Climatology from a training sequence.
struct Climatology {
    std::size_t n_slots = 1;
    std::vector<Field> slot_mean;         // [n_slots]
    std::vector<double> quantile_levels;  // ascending
    std::vector<Field> quantiles;         // per level, per pixel, pooled over slots
    std::vector<double> sigma;            // per channel: area-weighted pooled std of anomalies

    /// Slot of a timestamp: (timestamp / step_hours) mod n_slots.
    std::size_t slot_of(std::int64_t timestamp, int step_hours = 24) const;
    const Field& mean_for(std::int64_t timestamp, int step_hours = 24) const;
    const Field& quantile(double level) const;
};

inline const std::vector<double> kDefaultQuantileLevels{0.01, 0.05, 0.10, 0.90, 0.95, 0.99};

/// Linear interpolation of order statistics, h = (n - 1) q.
double empirical_quantile(std::vector<double>& values, double q);

/// Requires >= 2 samples per slot; samples must carry timestamps.
Climatology build_climatology(const std::vector<Field>& truth, std::size_t n_slots = 1,
                              const std::vector<double>& levels = kDefaultQuantileLevels, int step_hours = 24);

}  // namespace fmsr
