#include "fmsr/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fft.hpp"
#include "fmsr/errors.hpp"
#include "fmsr/parallel.hpp"

namespace fmsr {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

struct Preset {
    const char* name;
    ChannelSpec spec;
};

// slope, amplitude, offset, meridional
const Preset kPresets[] = {
    {"t2m", {-3.0, 3.0, 278.0, 30.0}},
    {"u10m", {-2.5, 3.0, 0.0, 4.0}},
    {"q700", {-2.5, 1.0e-3, 2.0e-3, 4.0e-3}},
    {"t850", {-3.0, 3.0, 266.0, 25.0}},
    {"u850", {-2.5, 5.0, 4.0, 8.0}},
    {"z500", {-3.5, 600.0, 54000.0, 3000.0}},
};

}  // namespace

void GRFConfig::validate(std::size_t n_channels) const {
    if (channels.size() != n_channels) {
        throw ValidationError("GRFConfig: " + std::to_string(channels.size()) + " channel specs for " +
                              std::to_string(n_channels) + " channels");
    }
    for (const auto& c : channels) {
        if (!(c.slope < 0.0)) throw ValidationError("GRFConfig: spectral slope must be negative");
        if (!(c.amplitude > 0.0)) throw ValidationError("GRFConfig: amplitude must be positive");
    }
    if (!(phi >= 0.0 && phi < 1.0)) throw ValidationError("GRFConfig: phi must lie in [0, 1)");
    if (step_hours <= 0) throw ValidationError("GRFConfig: step_hours must be positive");
}

nlohmann::json GRFConfig::to_json() const {
    nlohmann::json ch = nlohmann::json::array();
    for (const auto& c : channels) {
        ch.push_back({{"slope", c.slope}, {"amplitude", c.amplitude}, {"offset", c.offset},
                      {"meridional", c.meridional}});
    }
    return {{"channels", ch}, {"phi", phi}, {"seed", seed}, {"start_time", start_time}, {"step_hours", step_hours}};
}

GRFConfig GRFConfig::from_json(const nlohmann::json& j) {
    GRFConfig cfg;
    try {
        for (const auto& c : j.at("channels")) {
            cfg.channels.push_back({c.at("slope").get<double>(), c.at("amplitude").get<double>(),
                                    c.value("offset", 0.0), c.value("meridional", 0.0)});
        }
        cfg.phi = j.value("phi", cfg.phi);
        cfg.seed = j.value("seed", cfg.seed);
        cfg.start_time = j.value("start_time", cfg.start_time);
        cfg.step_hours = j.value("step_hours", cfg.step_hours);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("GRFConfig JSON: ") + e.what());
    }
    return cfg;
}

CatalogPtr default_catalog() {
    return std::make_shared<const ChannelCatalog>(std::vector<Channel>{
        {"t2m", std::nullopt}, {"u10m", std::nullopt}, {"q", 700}, {"t", 850}, {"u", 850}, {"z", 500}});
}

GRFConfig default_grf_config(const ChannelCatalog& catalog, std::uint64_t seed) {
    GRFConfig cfg;
    cfg.seed = seed;
    for (std::size_t c = 0; c < catalog.size(); ++c) {
        const std::string name = catalog[c].name();
        ChannelSpec spec;
        for (const auto& p : kPresets) {
            if (name == p.name) spec = p.spec;
        }
        cfg.channels.push_back(spec);
    }
    return cfg;
}

std::vector<double> grf_plane(const GridSpec& grid, double slope, Rng& rng) {
    const std::size_t R = 2 * grid.n_lat();
    const std::size_t W = grid.n_lon();
    const double aspect = static_cast<double>(W) / static_cast<double>(R);
    // Modal variance kappa^(slope - 1): summing over the meridional
    // wavenumber leaves a zonal spectrum ~ k^slope.
    std::vector<detail::cvec> spec(R, detail::cvec(W));
    double total = 0.0;
    for (std::size_t r = 0; r < R; ++r) {
        const double ky = (r <= R / 2 ? static_cast<double>(r) : static_cast<double>(r) - static_cast<double>(R)) * aspect;
        for (std::size_t m = 0; m < W; ++m) {
            const double kx = m <= W / 2 ? static_cast<double>(m) : static_cast<double>(m) - static_cast<double>(W);
            const double kappa = std::sqrt(kx * kx + ky * ky);
            const double a = kappa > 0.0 ? std::pow(kappa, 0.5 * (slope - 1.0)) : 0.0;
            const double re = rng.normal(), im = rng.normal();
            spec[r][m] = a * std::sqrt(0.5) * std::complex<double>(re, im);
            total += a * a;
        }
    }
    // Re of a sum of complex-normal modes has variance sum(a^2) / 2.
    const double norm = 1.0 / std::sqrt(0.5 * total);
    for (auto& row : spec) row = detail::fft_inverse_unscaled(row);
    std::vector<double> out(grid.size());
    detail::cvec col(R);
    for (std::size_t m = 0; m < W; ++m) {
        for (std::size_t r = 0; r < R; ++r) col[r] = spec[r][m];
        const auto g = detail::fft_inverse_unscaled(col);
        for (std::size_t j = 0; j < grid.n_lat(); ++j) out[j * W + m] = g[j].real() * norm;
    }
    return out;
}

Field mean_state(GridPtr grid, CatalogPtr catalog, const GRFConfig& cfg) {
    cfg.validate(catalog->size());
    Field f = Field::zeros(grid, catalog);
    for (std::size_t c = 0; c < catalog->size(); ++c) {
        const auto& s = cfg.channels[c];
        for (std::size_t j = 0; j < grid->n_lat(); ++j) {
            const double v = s.offset + s.meridional * std::cos(grid->lat_centers()[j] * kDeg);
            for (std::size_t k = 0; k < grid->n_lon(); ++k) f.at(c, j, k) = v;
        }
    }
    return f;
}

std::vector<Field> generate_truth(GridPtr grid, CatalogPtr catalog, const GRFConfig& cfg, std::size_t n_times) {
    cfg.validate(catalog->size());
    const std::size_t C = catalog->size();
    const std::size_t P = grid->size();
    // Innovations are independent per (channel, time) and keyed, so they can
    // be drawn in parallel.
    std::vector<std::vector<double>> innov(n_times);
    parallel_for(n_times, [&](std::size_t t) {
        innov[t].resize(C * P);
        for (std::size_t c = 0; c < C; ++c) {
            Rng rng = Rng::keyed(cfg.seed, {c, t});
            const auto g = grf_plane(*grid, cfg.channels[c].slope, rng);
            std::copy(g.begin(), g.end(), innov[t].begin() + c * P);
        }
    });
    const Field base = mean_state(grid, catalog, cfg);
    const double keep = cfg.phi;
    const double fresh = std::sqrt(1.0 - cfg.phi * cfg.phi);
    std::vector<double> anomaly(C * P, 0.0);
    std::vector<Field> out;
    out.reserve(n_times);
    for (std::size_t t = 0; t < n_times; ++t) {
        for (std::size_t i = 0; i < C * P; ++i) {
            anomaly[i] = t == 0 ? innov[t][i] : keep * anomaly[i] + fresh * innov[t][i];
        }
        std::vector<double> v(C * P);
        for (std::size_t c = 0; c < C; ++c) {
            const double amp = cfg.channels[c].amplitude;
            for (std::size_t p = 0; p < P; ++p) v[c * P + p] = base.values()[c * P + p] + amp * anomaly[c * P + p];
        }
        std::vector<double>().swap(innov[t]);
        out.emplace_back(grid, catalog, std::move(v),
                         cfg.start_time + static_cast<std::int64_t>(t) * cfg.step_hours);
    }
    return out;
}

void ToyForecastModel::validate(const Field& state) const {
    if (!(relaxation >= 0.0 && relaxation <= 1.0)) throw ValidationError("ToyForecastModel: relaxation must be in [0, 1]");
    if (!(noise_scale >= 0.0)) throw ValidationError("ToyForecastModel: noise_scale must be >= 0");
    if (climatology.empty() || !climatology.same_layout(state)) {
        throw ValidationError("ToyForecastModel: climatology must share the state's grid and catalog");
    }
    if (channel_std.size() != state.n_channels() || slopes.size() != state.n_channels()) {
        throw ValidationError("ToyForecastModel: channel_std and slopes need one entry per channel");
    }
}

Field ToyForecastModel::step(const Field& state, Rng& rng) const {
    const std::size_t H = state.n_lat(), W = state.n_lon(), P = H * W;
    std::vector<double> next(state.values().size());
    const double shift = advection - std::floor(advection / static_cast<double>(W)) * static_cast<double>(W);
    const auto whole = static_cast<std::size_t>(std::floor(shift));
    const double frac = shift - static_cast<double>(whole);
    const auto clim = climatology.values();
    for (std::size_t c = 0; c < state.n_channels(); ++c) {
        const auto in = state.channel(c);
        for (std::size_t j = 0; j < H; ++j) {
            for (std::size_t k = 0; k < W; ++k) {
                // value at k comes from k - shift
                const std::size_t a = (k + 2 * W - whole) % W;
                const std::size_t b = (k + 2 * W - whole - 1) % W;
                const double moved = (1.0 - frac) * in[j * W + a] + frac * in[j * W + b];
                const std::size_t i = c * P + j * W + k;
                next[i] = moved + relaxation * (clim[i] - moved);
            }
        }
        if (noise_scale > 0.0) {
            const auto g = grf_plane(state.grid(), slopes[c], rng);
            const double s = noise_scale * channel_std[c];
            for (std::size_t p = 0; p < P; ++p) next[c * P + p] += s * g[p];
        }
    }
    return state.with_values(std::move(next));
}

ToyForecastModel calibrated_emulator(const GRFConfig& cfg, const Field& coarse_mean, std::vector<double> coarse_std,
                                     std::uint64_t seed) {
    ToyForecastModel m;
    m.advection = 0.0;
    m.relaxation = 1.0 - cfg.phi;
    m.noise_scale = std::sqrt(1.0 - cfg.phi * cfg.phi);
    m.channel_std = std::move(coarse_std);
    for (const auto& c : cfg.channels) m.slopes.push_back(c.slope);
    m.climatology = coarse_mean;
    m.seed = seed;
    return m;
}

EnsembleSet emulate_forecast(const Field& initial, const ToyForecastModel& model, std::size_t T, std::size_t M) {
    model.validate(initial);
    if (T < 1 || M < 1) throw ValidationError("emulate_forecast: T and M must be >= 1");
    const std::int64_t init = initial.timestamp().value_or(0);
    EnsembleSet set;
    set.members.resize(M);
    parallel_for(M, [&](std::size_t m) {
        Trajectory& tr = set.members[m];
        tr.init_time = init;
        tr.lead_step_hours = 24;
        Field state = initial;
        for (std::size_t l = 1; l <= T; ++l) {
            Rng rng = Rng::keyed(model.seed, {static_cast<std::uint64_t>(init), m, l});
            state = model.step(state, rng);
            state.set_timestamp(init + static_cast<std::int64_t>(l) * tr.lead_step_hours);
            tr.states.push_back(state);
        }
    });
    return set;
}

std::size_t Climatology::slot_of(std::int64_t timestamp, int step_hours) const {
    const std::int64_t idx = timestamp / step_hours;
    const auto n = static_cast<std::int64_t>(n_slots);
    return static_cast<std::size_t>(((idx % n) + n) % n);
}

const Field& Climatology::mean_for(std::int64_t timestamp, int step_hours) const {
    return slot_mean[slot_of(timestamp, step_hours)];
}

const Field& Climatology::quantile(double level) const {
    for (std::size_t i = 0; i < quantile_levels.size(); ++i) {
        if (std::abs(quantile_levels[i] - level) < 1e-12) return quantiles[i];
    }
    throw ValidationError("climatology has no quantile at level " + std::to_string(level));
}

double empirical_quantile(std::vector<double>& values, double q) {
    if (values.empty()) throw ValidationError("empirical_quantile: no values");
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

Climatology build_climatology(const std::vector<Field>& truth, std::size_t n_slots, const std::vector<double>& levels,
                              int step_hours) {
    if (truth.empty()) throw ValidationError("build_climatology: no samples");
    if (n_slots < 1) throw ValidationError("build_climatology: n_slots must be >= 1");
    Climatology clim;
    clim.n_slots = n_slots;
    clim.quantile_levels = levels;
    const Field& first = truth.front();
    std::vector<std::size_t> count(n_slots, 0);
    std::vector<std::vector<double>> sums(n_slots, std::vector<double>(first.values().size(), 0.0));
    for (const auto& f : truth) {
        require_same_layout(first, f, "build_climatology");
        if (!f.timestamp()) throw ValidationError("build_climatology: samples need timestamps");
        const std::size_t s = clim.slot_of(*f.timestamp(), step_hours);
        ++count[s];
        for (std::size_t i = 0; i < sums[s].size(); ++i) sums[s][i] += f.values()[i];
    }
    for (std::size_t s = 0; s < n_slots; ++s) {
        if (count[s] < 2) {
            throw ValidationError("build_climatology: slot " + std::to_string(s) + " has " +
                                  std::to_string(count[s]) + " samples (need >= 2)");
        }
        for (double& v : sums[s]) v /= static_cast<double>(count[s]);
        clim.slot_mean.push_back(first.with_values(std::move(sums[s])));
        clim.slot_mean.back().set_timestamp(std::nullopt);
    }

    const std::size_t n = first.values().size();
    std::vector<std::vector<double>> q(levels.size(), std::vector<double>(n));
    const std::size_t chunk = 256;
    parallel_for((n + chunk - 1) / chunk, [&](std::size_t b) {
        std::vector<double> column(truth.size());
        for (std::size_t i = b * chunk; i < std::min(n, (b + 1) * chunk); ++i) {
            for (std::size_t t = 0; t < truth.size(); ++t) column[t] = truth[t].values()[i];
            for (std::size_t l = 0; l < levels.size(); ++l) q[l][i] = empirical_quantile(column, levels[l]);
        }
    });
    for (auto& v : q) {
        clim.quantiles.push_back(first.with_values(std::move(v)));
        clim.quantiles.back().set_timestamp(std::nullopt);
    }

    clim.sigma.assign(first.n_channels(), 0.0);
    for (const auto& f : truth) {
        const Field& m = clim.mean_for(*f.timestamp(), step_hours);
        std::vector<double> sq(n);
        for (std::size_t i = 0; i < n; ++i) sq[i] = (f.values()[i] - m.values()[i]) * (f.values()[i] - m.values()[i]);
        const auto wm = weighted_mean(first.with_values(std::move(sq)));
        for (std::size_t c = 0; c < wm.size(); ++c) clim.sigma[c] += wm[c];
    }
    for (double& s : clim.sigma) s = std::sqrt(s / static_cast<double>(truth.size()));
    return clim;
}

}  // namespace fmsr
