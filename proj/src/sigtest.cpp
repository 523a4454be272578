#include "fmsr/sigtest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

#include <boost/math/distributions/normal.hpp>

#include "fmsr/errors.hpp"
#include "fmsr/parallel.hpp"
#include "fmsr/synth.hpp"

namespace fmsr {
namespace {

double mean_of(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
}

const boost::math::normal_distribution<double> kStdNormal;

double norm_cdf(double z) { return boost::math::cdf(kStdNormal, z); }
double norm_ppf(double p) { return boost::math::quantile(kStdNormal, p); }

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cols.push_back(cell);
    if (!line.empty() && line.back() == ',') cols.emplace_back();
    return cols;
}

}  // namespace

void PairedSeries::validate() const {
    if (diffs.size() < 8) {
        throw ValidationError("sigtest: series " + metric + "/" + channel + "/" + std::to_string(lead_h) + " has " +
                              std::to_string(diffs.size()) + " dates (need >= 8)");
    }
    for (double d : diffs) {
        if (!std::isfinite(d)) throw NumericalError("sigtest: non-finite score difference in " + metric);
    }
}

double auto_block_length(std::span<const double> x) {
    const std::size_t n = x.size();
    if (n < 8) throw ValidationError("auto_block_length: need >= 8 values, got " + std::to_string(n));
    const double nd = static_cast<double>(n);
    const double mu = mean_of(x);

    const std::size_t kn = std::max<std::size_t>(5, static_cast<std::size_t>(std::sqrt(std::log10(nd))));
    const std::size_t m_max = std::min(n - 1, static_cast<std::size_t>(std::ceil(std::sqrt(nd))) + kn);
    std::vector<double> acv(m_max + 1, 0.0);
    for (std::size_t k = 0; k <= m_max; ++k) {
        double s = 0.0;
        for (std::size_t t = 0; t + k < n; ++t) s += (x[t] - mu) * (x[t + k] - mu);
        acv[k] = s / nd;
    }
    if (acv[0] <= 0.0) return 1.0;

    // Smallest lag after which kn consecutive autocorrelations are insignificant.
    const double thresh = 2.0 * std::sqrt(std::log10(nd) / nd);
    std::size_t m_hat = 0, run = 0, last_sig = 0;
    for (std::size_t k = 1; k <= m_max; ++k) {
        if (std::abs(acv[k] / acv[0]) < thresh) {
            if (++run == kn) {
                m_hat = k - kn + 1;
                break;
            }
        } else {
            run = 0;
            last_sig = k;
        }
    }
    if (m_hat == 0) m_hat = std::max<std::size_t>(1, last_sig);
    const std::size_t M = std::min(2 * m_hat, m_max);

    double g = 0.0, lr = acv[0];
    for (std::size_t k = 1; k <= M; ++k) {
        const double r = static_cast<double>(k) / static_cast<double>(M);
        const double lam = r <= 0.5 ? 1.0 : 2.0 * (1.0 - r);
        g += 2.0 * lam * static_cast<double>(k) * acv[k];
        lr += 2.0 * lam * acv[k];
    }
    const double d_sb = 2.0 * lr * lr;
    double b = d_sb > 0.0 ? std::cbrt(2.0 * g * g / d_sb) * std::cbrt(nd) : 1.0;
    const double b_max = std::ceil(std::min(3.0 * std::sqrt(nd), nd / 3.0));
    b = std::min({b, b_max, nd / 3.0});
    return std::max(b, 1.0);
}

std::vector<std::size_t> stationary_bootstrap_indices(std::size_t n, double mean_block_len, Rng& rng) {
    if (n == 0) return {};
    if (!(mean_block_len >= 1.0)) throw ValidationError("stationary bootstrap: mean block length must be >= 1");
    const double p_restart = 1.0 / mean_block_len;
    std::vector<std::size_t> idx(n);
    idx[0] = static_cast<std::size_t>(rng.below(n));
    for (std::size_t t = 1; t < n; ++t) {
        if (rng.uniform() < p_restart) idx[t] = static_cast<std::size_t>(rng.below(n));
        else idx[t] = (idx[t - 1] + 1) % n;
    }
    return idx;
}

std::vector<double> stationary_bootstrap_resample(std::span<const double> series, double mean_block_len, Rng& rng) {
    const auto idx = stationary_bootstrap_indices(series.size(), mean_block_len, rng);
    std::vector<double> out(idx.size());
    for (std::size_t t = 0; t < idx.size(); ++t) out[t] = series[idx[t]];
    return out;
}

double jackknife_acceleration(std::span<const double> x) {
    const double n = static_cast<double>(x.size());
    double total = 0.0;
    for (double v : x) total += v;
    std::vector<double> loo(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) loo[i] = (total - x[i]) / (n - 1.0);
    const double m = mean_of(loo);
    double num = 0.0, den = 0.0;
    for (double v : loo) {
        const double d = m - v;
        num += d * d * d;
        den += d * d;
    }
    if (den <= 0.0) return 0.0;
    return num / (6.0 * std::pow(den, 1.5));
}

std::pair<double, double> percentile_interval(std::vector<double> reps, double level) {
    const double alpha = 1.0 - level;
    std::sort(reps.begin(), reps.end());
    return {empirical_quantile(reps, alpha / 2.0), empirical_quantile(reps, 1.0 - alpha / 2.0)};
}

std::pair<double, double> bca_endpoints(std::vector<double> reps, double estimate, double accel, double level) {
    if (reps.empty()) throw ValidationError("bca: no replicates");
    const double B = static_cast<double>(reps.size());
    double below = 0.0;
    for (double r : reps) below += r < estimate ? 1.0 : (r == estimate ? 0.5 : 0.0);
    const double frac = std::clamp(below / B, 0.5 / B, 1.0 - 0.5 / B);
    const double z0 = norm_ppf(frac);
    const double alpha = 1.0 - level;
    auto adjusted = [&](double tail) {
        const double z = norm_ppf(tail);
        return norm_cdf(z0 + (z0 + z) / (1.0 - accel * (z0 + z)));
    };
    const double a1 = adjusted(alpha / 2.0), a2 = adjusted(1.0 - alpha / 2.0);
    std::sort(reps.begin(), reps.end());
    return {empirical_quantile(reps, a1), empirical_quantile(reps, a2)};
}

BootstrapResult bca_interval(std::span<const double> series, std::uint64_t seed, std::size_t n_resamples, double level,
                             std::optional<double> block_length) {
    if (n_resamples < 1000) throw ValidationError("bca_interval: n_resamples must be >= 1000");
    if (!(level > 0.0 && level < 1.0)) throw ValidationError("bca_interval: level must lie in (0, 1)");
    PairedSeries check{"", "", 0, std::vector<double>(series.begin(), series.end())};
    check.validate();

    BootstrapResult res;
    res.estimate = mean_of(series);
    res.level = level;
    res.n_resamples = n_resamples;
    res.block_length = block_length ? *block_length : auto_block_length(series);

    std::vector<double> reps(n_resamples);
    parallel_for(n_resamples, [&](std::size_t b) {
        Rng rng = Rng::keyed(seed, {b});
        const auto idx = stationary_bootstrap_indices(series.size(), res.block_length, rng);
        double s = 0.0;
        for (std::size_t i : idx) s += series[i];
        reps[b] = s / static_cast<double>(idx.size());
    });
    const auto [lo_it, hi_it] = std::minmax_element(reps.begin(), reps.end());
    if (*lo_it == *hi_it) {
        res.degenerate = true;
        res.lo = res.hi = res.estimate;
        return res;
    }
    std::tie(res.lo, res.hi) = bca_endpoints(std::move(reps), res.estimate, jackknife_acceleration(series), level);
    res.significant = res.lo > 0.0 || res.hi < 0.0;
    return res;
}

void write_score_csv(const std::filesystem::path& path, std::span<const ScoreRow> rows) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot open " + path.string() + " for writing");
    out << "metric,channel,lead_h,init_time,value\n";
    out.precision(12);
    for (const auto& r : rows) {
        out << r.metric << ',' << r.channel << ',' << r.lead_h << ',' << r.init_time << ',' << r.value << '\n';
    }
}

std::vector<ScoreRow> read_score_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != "metric,channel,lead_h,init_time,value") {
        throw ValidationError(path.string() + ": expected header metric,channel,lead_h,init_time,value");
    }
    std::vector<ScoreRow> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto cols = split_csv(line);
        if (cols.size() != 5) {
            throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": expected 5 columns");
        }
        try {
            rows.push_back({cols[0], cols[1], std::stoi(cols[2]), std::stoll(cols[3]), std::stod(cols[4])});
        } catch (const std::logic_error&) {
            throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": malformed number");
        }
    }
    return rows;
}

std::vector<PairedSeries> pair_scores(std::span<const ScoreRow> a, std::span<const ScoreRow> b) {
    using Key = std::tuple<std::string, std::string, int>;
    std::map<Key, std::map<std::int64_t, double>> ma, mb;
    for (const auto& r : a) ma[{r.metric, r.channel, r.lead_h}][r.init_time] = r.value;
    for (const auto& r : b) mb[{r.metric, r.channel, r.lead_h}][r.init_time] = r.value;
    std::vector<PairedSeries> out;
    for (const auto& [key, dates] : ma) {
        const auto it = mb.find(key);
        if (it == mb.end()) continue;
        PairedSeries s{std::get<0>(key), std::get<1>(key), std::get<2>(key), {}};
        for (const auto& [t, v] : dates) {
            const auto jt = it->second.find(t);
            if (jt == it->second.end()) {
                throw ValidationError("pair_scores: init_time " + std::to_string(t) + " of " + s.metric + "/" +
                                      s.channel + " missing from the second score file");
            }
            s.diffs.push_back(v - jt->second);
        }
        out.push_back(std::move(s));
    }
    if (out.empty()) throw ValidationError("pair_scores: the score files share no (metric, channel, lead_h) series");
    return out;
}

void write_sigtest_csv(const std::filesystem::path& path, std::span<const SigRow> rows) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot open " + path.string() + " for writing");
    out << "metric,channel,lead_h,estimate,lo,hi,block_len,significant\n";
    out.precision(10);
    for (const auto& r : rows) {
        out << r.series.metric << ',' << r.series.channel << ',' << r.series.lead_h << ',' << r.result.estimate << ','
            << r.result.lo << ',' << r.result.hi << ',' << r.result.block_length << ','
            << (r.result.significant ? 1 : 0) << '\n';
    }
}

}  // namespace fmsr
