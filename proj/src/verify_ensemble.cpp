#include "fmsr/verify_ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "fmsr/errors.hpp"
#include "fmsr/parallel.hpp"

namespace fmsr {
namespace {

struct Shape {
    std::size_t T = 0, M = 0, L = 0, C = 0, P = 0;
    const GridSpec* grid = nullptr;
};

Shape check_inputs(std::span<const EnsembleSet> fc, std::span<const Trajectory> truth, const char* what) {
    const std::string w(what);
    if (fc.empty()) throw ValidationError(w + ": no forecasts");
    if (fc.size() != truth.size()) {
        throw ValidationError(w + ": " + std::to_string(fc.size()) + " forecasts but " +
                              std::to_string(truth.size()) + " truth trajectories");
    }
    Shape s;
    s.T = fc.size();
    s.M = fc.front().size();
    s.L = fc.front().n_leads();
    if (s.M < 2) throw ValidationError(w + ": needs at least 2 members, got " + std::to_string(s.M));
    const Field& ref = fc.front().members.front().states.front();
    s.C = ref.n_channels();
    s.P = ref.plane_size();
    s.grid = &ref.grid();
    for (std::size_t t = 0; t < s.T; ++t) {
        fc[t].validate();
        if (fc[t].size() != s.M || fc[t].n_leads() != s.L) {
            throw ValidationError(w + ": forecast " + std::to_string(t) + " has a different member or lead count");
        }
        if (truth[t].length() < s.L) {
            throw ValidationError(w + ": truth " + std::to_string(t) + " has " + std::to_string(truth[t].length()) +
                                  " states, need " + std::to_string(s.L));
        }
        require_same_layout(fc[t].members.front().states.front(), ref, what);
        for (std::size_t l = 0; l < s.L; ++l) require_same_layout(truth[t].states[l], ref, what);
    }
    return s;
}

// Area-weighted mean over pixels and initializations of a pointwise score,
// one value per (channel, lead). score(members, truth, channel, pixel).
template <typename Score>
LeadTable pointwise_mean(std::span<const EnsembleSet> fc, std::span<const Trajectory> truth, const char* what,
                         Score score) {
    const Shape s = check_inputs(fc, truth, what);
    LeadTable out(s.C, std::vector<double>(s.L, 0.0));
    parallel_for(s.C * s.L, [&](std::size_t idx) {
        const std::size_t c = idx / s.L, l = idx % s.L;
        const std::size_t W = s.grid->n_lon();
        std::vector<double> x(s.M);
        double total = 0.0;
        for (std::size_t t = 0; t < s.T; ++t) {
            const auto y = truth[t].states[l].channel(c);
            double acc = 0.0;
            for (std::size_t j = 0; j < s.grid->n_lat(); ++j) {
                double row = 0.0;
                for (std::size_t k = 0; k < W; ++k) {
                    const std::size_t p = j * W + k;
                    for (std::size_t m = 0; m < s.M; ++m) x[m] = fc[t].members[m].states[l].channel(c)[p];
                    row += score(std::span<const double>(x), y[p], c, p);
                }
                acc += s.grid->area_weight()[j] * row;
            }
            total += acc;
        }
        out[c][l] = total / static_cast<double>(s.T);
    });
    return out;
}

double mean_of(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
}

double dev_sq(std::span<const double> x, double mean) {
    double s = 0.0;
    for (double v : x) s += (v - mean) * (v - mean);
    return s;
}

}  // namespace

LeadTable fair_ens_mean_mse(std::span<const EnsembleSet> fc, std::span<const Trajectory> truth) {
    return pointwise_mean(fc, truth, "fair_ens_mean_rmse", [](std::span<const double> x, double y, auto, auto) {
        const double M = static_cast<double>(x.size());
        const double mean = mean_of(x);
        return (mean - y) * (mean - y) - dev_sq(x, mean) / (M * (M - 1.0));
    });
}

LeadTable fair_ens_mean_rmse(std::span<const EnsembleSet> fc, std::span<const Trajectory> truth) {
    LeadTable out = fair_ens_mean_mse(fc, truth);
    for (auto& row : out)
        for (double& v : row) v = std::sqrt(std::max(v, 0.0));
    return out;
}

LeadTable ens_mean_rmse(std::span<const EnsembleSet> fc, std::span<const Trajectory> truth) {
    LeadTable out = pointwise_mean(fc, truth, "ens_mean_rmse", [](std::span<const double> x, double y, auto, auto) {
        const double e = mean_of(x) - y;
        return e * e;
    });
    for (auto& row : out)
        for (double& v : row) v = std::sqrt(v);
    return out;
}

double fair_crps_scalar(std::span<const double> members, double truth) {
    const std::size_t M = members.size();
    if (M < 2) throw ValidationError("fair_crps: needs at least 2 members");
    std::vector<double> x(members.begin(), members.end());
    std::sort(x.begin(), x.end());
    double skill = 0.0, pairs = 0.0;
    for (std::size_t i = 0; i < M; ++i) {
        skill += std::abs(x[i] - truth);
        // sum over ordered pairs of |x_i - x_j| = 2 sum_i (2i - M + 1) x_(i)
        pairs += (2.0 * static_cast<double>(i) - static_cast<double>(M) + 1.0) * x[i];
    }
    const double Md = static_cast<double>(M);
    return skill / Md - 2.0 * pairs / (2.0 * Md * (Md - 1.0));
}

LeadTable fair_crps(std::span<const EnsembleSet> fc, std::span<const Trajectory> truth) {
    return pointwise_mean(fc, truth, "fair_crps",
                          [](std::span<const double> x, double y, auto, auto) { return fair_crps_scalar(x, y); });
}

double fair_energy_score_vec(std::span<const std::vector<double>> members, std::span<const double> truth) {
    const std::size_t M = members.size();
    if (M < 2) throw ValidationError("energy_score: needs at least 2 members");
    auto dist = [](std::span<const double> a, std::span<const double> b) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
        return std::sqrt(s);
    };
    double skill = 0.0, pairs = 0.0;
    for (std::size_t i = 0; i < M; ++i) {
        if (members[i].size() != truth.size()) throw ValidationError("energy_score: member length mismatch");
        skill += dist(members[i], truth);
        for (std::size_t j = i + 1; j < M; ++j) pairs += 2.0 * dist(members[i], members[j]);
    }
    const double Md = static_cast<double>(M);
    return skill / Md - pairs / (2.0 * Md * (Md - 1.0));
}

std::vector<double> energy_score(std::span<const EnsembleSet> fc, std::span<const Trajectory> truth) {
    const Shape s = check_inputs(fc, truth, "energy_score");
    const ChannelCatalog& cat = fc.front().members.front().states.front().catalog();
    std::vector<double> scale(s.C * s.P);
    for (std::size_t c = 0; c < s.C; ++c) {
        const double cw = cat.level_weight(c) * cat.variable_weight(c);
        for (std::size_t p = 0; p < s.P; ++p) {
            scale[c * s.P + p] = std::sqrt(s.grid->area_weight()[p / s.grid->n_lon()] * cw);
        }
    }
    std::vector<double> per(s.L * s.T);
    parallel_for(s.L * s.T, [&](std::size_t idx) {
        const std::size_t l = idx / s.T, t = idx % s.T;
        std::vector<std::vector<double>> z(s.M, std::vector<double>(s.C * s.P));
        std::vector<double> y(s.C * s.P);
        const auto yv = truth[t].states[l].values();
        for (std::size_t i = 0; i < y.size(); ++i) y[i] = scale[i] * yv[i];
        for (std::size_t m = 0; m < s.M; ++m) {
            const auto xv = fc[t].members[m].states[l].values();
            for (std::size_t i = 0; i < y.size(); ++i) z[m][i] = scale[i] * xv[i];
        }
        per[idx] = fair_energy_score_vec(z, y);
    });
    std::vector<double> out(s.L, 0.0);
    for (std::size_t l = 0; l < s.L; ++l) {
        for (std::size_t t = 0; t < s.T; ++t) out[l] += per[l * s.T + t];
        out[l] /= static_cast<double>(s.T);
    }
    return out;
}

LeadTable fair_brier_at(std::span<const EnsembleSet> fc, std::span<const Trajectory> truth, const Field& threshold) {
    if (!fc.empty() && !fc.front().members.empty() && !fc.front().members.front().states.empty()) {
        require_same_layout(threshold, fc.front().members.front().states.front(), "fair_brier");
    }
    return pointwise_mean(fc, truth, "fair_brier", [&](std::span<const double> x, double y, std::size_t c,
                                                       std::size_t p) {
        const double thr = threshold.channel(c)[p];
        double n = 0.0;
        for (double v : x) n += v > thr ? 1.0 : 0.0;
        const double M = static_cast<double>(x.size());
        const double prob = n / M;
        const double obs = y > thr ? 1.0 : 0.0;
        return (prob - obs) * (prob - obs) - prob * (1.0 - prob) / (M - 1.0);
    });
}

LeadTable fair_brier(std::span<const EnsembleSet> fc, std::span<const Trajectory> truth, const Climatology& clim,
                     double q) {
    if (!(q > 0.0 && q < 1.0)) throw ValidationError("fair_brier: q must lie in (0, 1), got " + std::to_string(q));
    LeadTable lo = fair_brier_at(fc, truth, clim.quantile(q));
    const LeadTable hi = fair_brier_at(fc, truth, clim.quantile(1.0 - q));
    for (std::size_t c = 0; c < lo.size(); ++c)
        for (std::size_t l = 0; l < lo[c].size(); ++l) lo[c][l] = 0.5 * (lo[c][l] + hi[c][l]);
    return lo;
}

LeadTable ensemble_spread(std::span<const EnsembleSet> fc, std::span<const Trajectory> truth) {
    LeadTable out = pointwise_mean(fc, truth, "ensemble_spread", [](std::span<const double> x, double, auto, auto) {
        return dev_sq(x, mean_of(x)) / static_cast<double>(x.size() - 1);
    });
    for (auto& row : out)
        for (double& v : row) v = std::sqrt(v);
    return out;
}

LeadTable spread_skill_ratio(std::span<const EnsembleSet> fc, std::span<const Trajectory> truth) {
    LeadTable spread = ensemble_spread(fc, truth);
    const LeadTable rmse = ens_mean_rmse(fc, truth);
    const double M = static_cast<double>(fc.front().size());
    for (std::size_t c = 0; c < spread.size(); ++c) {
        for (std::size_t l = 0; l < spread[c].size(); ++l) {
            if (rmse[c][l] <= 0.0) {
                throw NumericalError("spread_skill_ratio: ensemble-mean RMSE is zero at channel " + std::to_string(c) +
                                     ", lead " + std::to_string(l));
            }
            spread[c][l] = std::sqrt((M + 1.0) / M) * spread[c][l] / rmse[c][l];
        }
    }
    return spread;
}

double skill_score(double model, double reference) {
    if (!(reference > 0.0)) throw ValidationError("skill_score: reference value must be positive");
    return 1.0 - model / reference;
}

const MetricRow* MetricReport::find(const std::string& metric, const std::string& channel, int lead_h,
                                    std::optional<double> q) const {
    for (const auto& r : rows) {
        if (r.metric != metric || r.channel != channel || r.lead_h != lead_h) continue;
        if (r.q.has_value() != q.has_value()) continue;
        if (q && std::abs(*r.q - *q) > 1e-9) continue;
        return &r;
    }
    return nullptr;
}

MetricReport evaluate_ensembles(std::span<const EnsembleSet> fc, std::span<const Trajectory> truth,
                                const Climatology& clim, const std::vector<double>& brier_levels) {
    const Shape s = check_inputs(fc, truth, "evaluate_ensembles");
    MetricReport rep;
    rep.n_members = s.M;
    rep.n_inits = s.T;
    const int step = fc.front().members.front().lead_step_hours;
    const auto names = fc.front().members.front().states.front().catalog().names();
    auto add_table = [&](const std::string& metric, const LeadTable& tab, std::optional<double> q = std::nullopt) {
        for (std::size_t c = 0; c < s.C; ++c)
            for (std::size_t l = 0; l < s.L; ++l)
                rep.rows.push_back({metric, names[c], static_cast<int>(l + 1) * step, q, tab[c][l]});
    };
    add_table("rmse", fair_ens_mean_rmse(fc, truth));
    add_table("crps", fair_crps(fc, truth));
    add_table("spread", ensemble_spread(fc, truth));
    add_table("ssr", spread_skill_ratio(fc, truth));
    for (double q : brier_levels) add_table("brier", fair_brier(fc, truth, clim, q), q);
    const auto es = energy_score(fc, truth);
    for (std::size_t l = 0; l < s.L; ++l) rep.rows.push_back({"energy", "", static_cast<int>(l + 1) * step, {}, es[l]});
    return rep;
}

MetricReport skill_report(const MetricReport& model, const MetricReport& reference) {
    MetricReport out;
    out.n_members = model.n_members;
    out.n_inits = model.n_inits;
    for (const auto& r : model.rows) {
        if (r.metric == "ssr" || r.metric == "spread") continue;
        const MetricRow* ref = reference.find(r.metric, r.channel, r.lead_h, r.q);
        if (!ref) continue;
        out.rows.push_back({r.metric + "_ss", r.channel, r.lead_h, r.q, skill_score(r.value, ref->value)});
    }
    return out;
}

std::vector<std::pair<int, double>> average_skill(const MetricReport& skill, const std::string& metric,
                                                  const std::vector<std::string>& channels) {
    std::map<int, std::pair<double, std::size_t>> acc;
    for (const auto& r : skill.rows) {
        if (r.metric != metric) continue;
        if (!channels.empty() && std::find(channels.begin(), channels.end(), r.channel) == channels.end()) continue;
        auto& a = acc[r.lead_h];
        a.first += r.value;
        ++a.second;
    }
    std::vector<std::pair<int, double>> out;
    for (const auto& [lead, a] : acc) out.emplace_back(lead, a.first / static_cast<double>(a.second));
    return out;
}

void write_metric_csv(const std::filesystem::path& path, const MetricReport& report) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot open " + path.string() + " for writing");
    out << "metric,channel,lead_h,q,value\n";
    out.precision(12);
    for (const auto& r : report.rows) {
        out << r.metric << ',' << r.channel << ',' << r.lead_h << ',';
        if (r.q) out << *r.q;
        out << ',' << r.value << '\n';
    }
}

MetricReport read_metric_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != "metric,channel,lead_h,q,value") {
        throw ValidationError(path.string() + ": expected header metric,channel,lead_h,q,value");
    }
    MetricReport rep;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> cols;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cols.push_back(cell);
        if (line.back() == ',') cols.emplace_back();
        if (cols.size() != 5) {
            throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": expected 5 columns");
        }
        try {
            MetricRow r{cols[0], cols[1], std::stoi(cols[2]), std::nullopt, std::stod(cols[4])};
            if (!cols[3].empty()) r.q = std::stod(cols[3]);
            rep.rows.push_back(std::move(r));
        } catch (const std::logic_error&) {
            throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": malformed number");
        }
    }
    return rep;
}

}  // namespace fmsr
