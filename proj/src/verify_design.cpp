#include "fmsr/verify_design.hpp"

#include <cmath>
#include <fstream>

#include "fmsr/errors.hpp"
#include "fmsr/parallel.hpp"

namespace fmsr {
namespace {

// Area-weighted spatial moments of one plane pair about their weighted means.
struct Moments {
    double cov = 0.0, var_a = 0.0, var_b = 0.0;
};

Moments plane_moments(const GridSpec& g, std::span<const double> a, std::span<const double> b) {
    const double ma = weighted_plane_mean(g, a);
    const double mb = weighted_plane_mean(g, b);
    Moments m;
    const std::size_t W = g.n_lon();
    for (std::size_t j = 0; j < g.n_lat(); ++j) {
        const double w = g.area_weight()[j];
        double c = 0.0, va = 0.0, vb = 0.0;
        for (std::size_t k = 0; k < W; ++k) {
            const double da = a[j * W + k] - ma, db = b[j * W + k] - mb;
            c += da * db;
            va += da * da;
            vb += db * db;
        }
        m.cov += w * c;
        m.var_a += w * va;
        m.var_b += w * vb;
    }
    return m;
}

const Field& clim_mean(const Climatology& clim, const Field& f, int step_hours) {
    if (f.timestamp()) return clim.mean_for(*f.timestamp(), step_hours);
    if (clim.n_slots == 1) return clim.slot_mean.front();
    throw ValidationError("activity: field has no timestamp but the climatology has " +
                          std::to_string(clim.n_slots) + " slots");
}

void require_matched(std::span<const Field> a, std::span<const Field> b, const char* what) {
    if (a.empty()) throw ValidationError(std::string(what) + ": empty sequence");
    if (a.size() != b.size()) {
        throw ValidationError(std::string(what) + ": sequence lengths differ (" + std::to_string(a.size()) +
                              " vs " + std::to_string(b.size()) + ")");
    }
    for (std::size_t t = 0; t < a.size(); ++t) require_same_layout(a[t], b[t], what);
}

}  // namespace

std::vector<double> pattern_correlation(const Field& a, const Field& b) {
    require_same_layout(a, b, "pattern_correlation");
    std::vector<double> out(a.n_channels());
    for (std::size_t c = 0; c < a.n_channels(); ++c) {
        const Moments m = plane_moments(a.grid(), a.channel(c), b.channel(c));
        if (m.var_a <= 0.0 || m.var_b <= 0.0) {
            throw NumericalError("pattern_correlation: channel " + a.catalog()[c].name() +
                                 " has zero spatial variance");
        }
        out[c] = m.cov / std::sqrt(m.var_a * m.var_b);
    }
    return out;
}

std::vector<double> activity(std::span<const Field> fields, const Climatology& clim, int step_hours) {
    if (fields.empty()) throw ValidationError("activity: empty sequence");
    const std::size_t C = fields.front().n_channels();
    std::vector<double> per_t(fields.size() * C);
    parallel_for(fields.size(), [&](std::size_t t) {
        const Field& f = fields[t];
        const Field& m = clim_mean(clim, f, step_hours);
        require_same_layout(f, m, "activity");
        std::vector<double> anom(f.plane_size());
        for (std::size_t c = 0; c < C; ++c) {
            const auto x = f.channel(c), mc = m.channel(c);
            for (std::size_t i = 0; i < anom.size(); ++i) anom[i] = x[i] - mc[i];
            per_t[t * C + c] = plane_moments(f.grid(), anom, anom).var_a;
        }
    });
    std::vector<double> out(C, 0.0);
    for (std::size_t t = 0; t < fields.size(); ++t)
        for (std::size_t c = 0; c < C; ++c) out[c] += per_t[t * C + c];
    for (double& v : out) v /= static_cast<double>(fields.size());
    return out;
}

std::vector<double> activity_ratio(std::span<const Field> sr_recoarsened, std::span<const Field> lr,
                                   const Climatology& clim, int step_hours) {
    require_matched(sr_recoarsened, lr, "activity_ratio");
    const auto num = activity(sr_recoarsened, clim, step_hours);
    const auto den = activity(lr, clim, step_hours);
    std::vector<double> out(num.size());
    for (std::size_t c = 0; c < num.size(); ++c) {
        if (den[c] <= 0.0) throw NumericalError("activity_ratio: reference activity is zero");
        out[c] = num[c] / den[c];
    }
    return out;
}

std::vector<double> nrmse(std::span<const Field> sr_recoarsened, std::span<const Field> lr,
                          std::span<const double> sigma_clim) {
    require_matched(sr_recoarsened, lr, "nrmse");
    const std::size_t C = lr.front().n_channels();
    if (sigma_clim.size() != C) throw ValidationError("nrmse: sigma_clim has wrong channel count");
    for (double s : sigma_clim) {
        if (!(s > 0.0)) throw ValidationError("nrmse: sigma_clim must be positive");
    }
    std::vector<double> mse(C, 0.0);
    std::vector<double> diff(lr.front().plane_size());
    for (std::size_t t = 0; t < lr.size(); ++t) {
        for (std::size_t c = 0; c < C; ++c) {
            const auto a = sr_recoarsened[t].channel(c), b = lr[t].channel(c);
            for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = (a[i] - b[i]) * (a[i] - b[i]);
            mse[c] += weighted_plane_mean(lr[t].grid(), diff);
        }
    }
    std::vector<double> out(C);
    for (std::size_t c = 0; c < C; ++c) out[c] = std::sqrt(mse[c] / static_cast<double>(lr.size())) / sigma_clim[c];
    return out;
}

std::vector<DesignRow> design_rows(std::span<const Field> sr_recoarsened, std::span<const Field> lr,
                                   const Climatology& clim, int lead_h, int step_hours) {
    require_matched(sr_recoarsened, lr, "design_rows");
    const std::size_t C = lr.front().n_channels();
    std::vector<double> corr(C, 0.0);
    for (std::size_t t = 0; t < lr.size(); ++t) {
        const auto r = pattern_correlation(sr_recoarsened[t], lr[t]);
        for (std::size_t c = 0; c < C; ++c) corr[c] += r[c];
    }
    const auto act = activity_ratio(sr_recoarsened, lr, clim, step_hours);
    const auto err = nrmse(sr_recoarsened, lr, clim.sigma);
    std::vector<DesignRow> rows;
    for (std::size_t c = 0; c < C; ++c) {
        rows.push_back({lr.front().catalog()[c].name(), lead_h, corr[c] / static_cast<double>(lr.size()), act[c],
                        err[c]});
    }
    return rows;
}

void write_design_csv(const std::filesystem::path& path, const DesignReport& report) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot open " + path.string() + " for writing");
    out << "channel,lead_h,corr,activity_ratio,nrmse\n";
    out.precision(10);
    for (const auto& r : report.rows) {
        out << r.channel << ',' << r.lead_h << ',' << r.corr << ',' << r.activity_ratio << ',' << r.nrmse << '\n';
    }
}

}  // namespace fmsr
