#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>

#include "fmsr/errors.hpp"
#include "fmsr/verify_design.hpp"
#include "fmsr/verify_ensemble.hpp"
#include "support.hpp"

using namespace fmsr;

namespace {

Climatology flat_climatology(const Field& mean) {
    Climatology c;
    c.n_slots = 1;
    c.slot_mean = {mean};
    c.sigma.assign(mean.n_channels(), 1.0);
    return c;
}

// Naive references: direct loops over channels, rows, columns.
double naive_wmean(const Field& f, std::size_t c, const std::function<double(std::size_t, std::size_t)>& g) {
    double s = 0.0;
    for (std::size_t j = 0; j < f.n_lat(); ++j)
        for (std::size_t k = 0; k < f.n_lon(); ++k) s += f.grid().area_weight()[j] * g(j, k);
    (void)c;
    return s;
}

double naive_activity(const std::vector<Field>& xs, const Field& clim, std::size_t c) {
    double total = 0.0;
    for (const auto& x : xs) {
        const double m = naive_wmean(x, c, [&](auto j, auto k) { return x.at(c, j, k) - clim.at(c, j, k); });
        total += naive_wmean(x, c, [&](auto j, auto k) {
            const double d = x.at(c, j, k) - clim.at(c, j, k) - m;
            return d * d;
        });
    }
    return total / static_cast<double>(xs.size());
}

Field constant_like(const Field& like, double v) {
    std::vector<double> vals(like.values().size(), v);
    return like.with_values(std::move(vals));
}

// forecasts[t] from members[t][m][l]; truth[t] from truth[t][l].
struct Verif {
    std::vector<EnsembleSet> fc;
    std::vector<Trajectory> truth;
};

Verif make_verif(const std::vector<std::vector<std::vector<Field>>>& members,
                 const std::vector<std::vector<Field>>& truth) {
    Verif v;
    for (std::size_t t = 0; t < members.size(); ++t) {
        EnsembleSet e;
        for (const auto& traj : members[t]) e.members.push_back({static_cast<std::int64_t>(t) * 24, 24, traj});
        v.fc.push_back(std::move(e));
        v.truth.push_back({static_cast<std::int64_t>(t) * 24, 24, truth[t]});
    }
    return v;
}

double naive_crps(const std::vector<double>& x, double y) {
    const double M = static_cast<double>(x.size());
    double a = 0.0, b = 0.0;
    for (double xi : x) {
        a += std::abs(xi - y);
        for (double xj : x) b += std::abs(xi - xj);
    }
    return a / M - b / (2.0 * M * (M - 1.0));
}

double gaussian_crps(double mu, double sigma, double y) {
    const double z = (y - mu) / sigma;
    const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
    const double cdf = 0.5 * std::erfc(-z / std::numbers::sqrt2);
    return sigma * (z * (2.0 * cdf - 1.0) + 2.0 * pdf - 1.0 / std::sqrt(std::numbers::pi));
}

// Random one-lead ensemble: T inits, M members, members ~ truth + spread * N(0,1)
// when `centred`, otherwise members and truth are independent N(0,1) draws.
Verif random_verif(const GridPtr& g, const CatalogPtr& cat, std::size_t T, std::size_t M, std::size_t L, Rng& rng,
                   double spread = 1.0, bool centred = false) {
    std::vector<std::vector<std::vector<Field>>> mem(T, std::vector<std::vector<Field>>(M));
    std::vector<std::vector<Field>> tr(T);
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t l = 0; l < L; ++l) {
            Field y = test::random_field(g, cat, rng);
            for (std::size_t m = 0; m < M; ++m) {
                Field x = test::random_field(g, cat, rng);
                for (std::size_t i = 0; i < x.values().size(); ++i) {
                    x.values()[i] = (centred ? y.values()[i] : 0.0) + spread * x.values()[i];
                }
                mem[t][m].push_back(std::move(x));
            }
            tr[t].push_back(std::move(y));
        }
    }
    return make_verif(mem, tr);
}

}  // namespace

TEST_CASE("pattern correlation: identity, sign flip, hand value") {
    auto g = make_grid_ptr(4, 4);
    auto cat = test::catalog({{"t2m", std::nullopt}});
    Field a = Field::zeros(g, cat), b = Field::zeros(g, cat);
    for (std::size_t j = 0; j < 4; ++j) {
        for (std::size_t k = 0; k < 4; ++k) {
            a.at(0, j, k) = static_cast<double>(j + k);
            b.at(0, j, k) = static_cast<double>(j * j) - static_cast<double>(k);
        }
    }
    CHECK(pattern_correlation(a, a)[0] == doctest::Approx(1.0).epsilon(1e-14));
    Field neg = a;
    for (double& v : neg.values()) v = 10.0 - v;
    CHECK(pattern_correlation(a, neg)[0] == doctest::Approx(-1.0).epsilon(1e-14));
    // Weights 0.0366116..., 0.0883883... per cell, evaluated independently.
    CHECK(pattern_correlation(a, b)[0] == doctest::Approx(0.28098131631435896).epsilon(1e-12));
}

TEST_CASE("pattern correlation is invariant under positive affine maps") {
    auto g = make_grid_ptr(8, 16);
    auto cat = test::two_channels();
    Rng rng(3);
    Field a = test::random_field(g, cat, rng), b = test::random_field(g, cat, rng);
    const auto r0 = pattern_correlation(a, b);
    Field a2 = a, b2 = b;
    for (std::size_t c = 0; c < 2; ++c) {
        for (double& v : a2.channel(c)) v = 3.5 * v - 7.0 * static_cast<double>(c + 1);
        for (double& v : b2.channel(c)) v = 0.25 * v + 100.0;
    }
    const auto r1 = pattern_correlation(a2, b2);
    for (std::size_t c = 0; c < 2; ++c) CHECK(r1[c] == doctest::Approx(r0[c]).epsilon(1e-12));
}

TEST_CASE("pattern correlation rejects constant fields") {
    auto g = make_grid_ptr(4, 8);
    auto cat = test::catalog({{"t2m", std::nullopt}});
    Rng rng(1);
    Field a = test::random_field(g, cat, rng);
    CHECK_THROWS_AS(pattern_correlation(a, constant_like(a, 2.0)), NumericalError);
}

TEST_CASE("activity: ratio of identical sets, variance scaling, brute force") {
    auto g = make_grid_ptr(8, 16);
    auto cat = test::two_channels();
    Rng rng(11);
    const Field clim_mean = test::random_field(g, cat, rng, 5.0);
    const Climatology clim = flat_climatology(clim_mean);
    std::vector<Field> lr, doubled;
    for (int t = 0; t < 6; ++t) {
        Field anom = test::random_field(g, cat, rng);
        Field x = clim_mean, x2 = clim_mean;
        for (std::size_t i = 0; i < x.values().size(); ++i) {
            x.values()[i] += anom.values()[i];
            x2.values()[i] += 2.0 * anom.values()[i];
        }
        lr.push_back(x);
        doubled.push_back(x2);
    }
    for (double r : activity_ratio(lr, lr, clim)) CHECK(r == doctest::Approx(1.0).epsilon(1e-14));
    for (double r : activity_ratio(doubled, lr, clim)) CHECK(r == doctest::Approx(4.0).epsilon(1e-12));
    const auto act = activity(lr, clim);
    for (std::size_t c = 0; c < 2; ++c) CHECK(std::abs(act[c] - naive_activity(lr, clim_mean, c)) < 1e-10);

    SUBCASE("spatially constant offsets per time leave activity unchanged") {
        std::vector<Field> shifted = lr;
        for (std::size_t t = 0; t < shifted.size(); ++t)
            for (double& v : shifted[t].values()) v += 3.0 * static_cast<double>(t) - 4.0;
        const auto act2 = activity(shifted, clim);
        for (std::size_t c = 0; c < 2; ++c) CHECK(act2[c] == doctest::Approx(act[c]).epsilon(1e-10));
    }
    CHECK_THROWS_AS(activity(std::vector<Field>{}, clim), ValidationError);
}

TEST_CASE("nrmse: identical, constant offset, brute force") {
    auto g = make_grid_ptr(8, 16);
    auto cat = test::two_channels();
    Rng rng(5);
    std::vector<Field> a, b, off;
    for (int t = 0; t < 4; ++t) {
        a.push_back(test::random_field(g, cat, rng));
        b.push_back(test::random_field(g, cat, rng));
        Field o = a.back();
        for (double& v : o.values()) v += 0.3;
        off.push_back(o);
    }
    const std::vector<double> sig{2.0, 0.5};
    for (double v : nrmse(a, a, sig)) CHECK(v == 0.0);
    const auto n_off = nrmse(off, a, sig);
    CHECK(n_off[0] == doctest::Approx(0.15).epsilon(1e-12));
    CHECK(n_off[1] == doctest::Approx(0.6).epsilon(1e-12));

    const auto n = nrmse(a, b, sig);
    for (std::size_t c = 0; c < 2; ++c) {
        double mse = 0.0;
        for (std::size_t t = 0; t < a.size(); ++t)
            mse += naive_wmean(a[t], c, [&](auto j, auto k) {
                const double d = a[t].at(c, j, k) - b[t].at(c, j, k);
                return d * d;
            });
        CHECK(std::abs(n[c] - std::sqrt(mse / 4.0) / sig[c]) < 1e-10);
    }
    CHECK_THROWS_AS(nrmse(a, b, std::vector<double>{1.0, 0.0}), ValidationError);
    CHECK_THROWS_AS(nrmse(a, std::span<const Field>(b).first(2), sig), ValidationError);
}

TEST_CASE("design report CSV") {
    auto g = make_grid_ptr(4, 8);
    auto cat = test::two_channels();
    Rng rng(8);
    std::vector<Field> a{test::random_field(g, cat, rng), test::random_field(g, cat, rng)};
    Climatology clim = flat_climatology(Field::zeros(g, cat));
    DesignReport rep{2, design_rows(a, a, clim, 24)};
    REQUIRE(rep.rows.size() == 2);
    CHECK(rep.rows[0].corr == doctest::Approx(1.0));
    CHECK(rep.rows[0].activity_ratio == doctest::Approx(1.0));
    CHECK(rep.rows[0].nrmse == 0.0);
    const auto path = std::filesystem::temp_directory_path() / "fmsr_design.csv";
    write_design_csv(path, rep);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "channel,lead_h,corr,activity_ratio,nrmse");
    std::filesystem::remove(path);
}

TEST_CASE("fair ensemble-mean RMSE: hand values and Monte Carlo") {
    auto g = make_grid_ptr(4, 8);
    auto cat = test::catalog({{"t2m", std::nullopt}});
    const Field zero = Field::zeros(g, cat);
    SUBCASE("members {0, 2}, truth 0") {
        auto v = make_verif({{{zero}, {constant_like(zero, 2.0)}}}, {{zero}});
        CHECK(fair_ens_mean_mse(v.fc, v.truth)[0][0] == doctest::Approx(0.0).epsilon(1e-15));
        CHECK(fair_ens_mean_rmse(v.fc, v.truth)[0][0] < 1e-7);
        CHECK(ens_mean_rmse(v.fc, v.truth)[0][0] == doctest::Approx(1.0));
    }
    SUBCASE("members equal to truth") {
        Rng rng(2);
        Field y = test::random_field(g, cat, rng);
        auto v = make_verif({{{y}, {y}, {y}}}, {{y}});
        CHECK(fair_ens_mean_rmse(v.fc, v.truth)[0][0] < 1e-15);  // mean of three copies rounds
    }
    SUBCASE("M = 100 members around the truth") {
        Rng rng(4);
        auto v = random_verif(make_grid_ptr(8, 16), cat, 2, 100, 1, rng, 1.0, true);
        CHECK(fair_ens_mean_rmse(v.fc, v.truth)[0][0] < 0.15);
        // The uncorrected error keeps the 1/M noise term.
        CHECK(ens_mean_rmse(v.fc, v.truth)[0][0] == doctest::Approx(0.1).epsilon(0.1));
    }
    SUBCASE("single member rejected") {
        auto v = make_verif({{{zero}}}, {{zero}});
        CHECK_THROWS_AS(fair_ens_mean_rmse(v.fc, v.truth), ValidationError);
    }
}

TEST_CASE("fair CRPS: hand values and naive oracle") {
    CHECK(fair_crps_scalar(std::vector<double>{0.0, 1.0}, 0.0) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(fair_crps_scalar(std::vector<double>{0.7, 0.7, 0.7}, 0.7) == 0.0);
    CHECK_THROWS_AS(fair_crps_scalar(std::vector<double>{1.0}, 0.0), ValidationError);

    Rng rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> x(2 + trial % 9);
        for (double& v : x) v = rng.normal();
        const double y = rng.normal();
        CHECK(std::abs(fair_crps_scalar(x, y) - naive_crps(x, y)) < 1e-12);
    }

    auto g = make_grid_ptr(4, 8);
    auto cat = test::two_channels();
    auto v = random_verif(g, cat, 3, 4, 2, rng);
    const auto crps = fair_crps(v.fc, v.truth);
    for (std::size_t c = 0; c < 2; ++c) {
        for (std::size_t l = 0; l < 2; ++l) {
            double total = 0.0;
            for (std::size_t t = 0; t < 3; ++t) {
                const Field& y = v.truth[t].states[l];
                total += naive_wmean(y, c, [&](auto j, auto k) {
                    std::vector<double> x;
                    for (const auto& m : v.fc[t].members) x.push_back(m.states[l].at(c, j, k));
                    return naive_crps(x, y.at(c, j, k));
                });
            }
            CHECK(std::abs(crps[c][l] - total / 3.0) < 1e-10);
        }
    }
}

TEST_CASE("fair CRPS matches the Gaussian closed form in expectation") {
    Rng rng(21);
    const double mu = 1.0, sigma = 2.0;
    const int n = 100000;
    double est = 0.0, ref = 0.0;
    std::vector<double> x(5);
    for (int i = 0; i < n; ++i) {
        for (double& v : x) v = mu + sigma * rng.normal();
        const double y = mu + sigma * rng.normal();
        est += fair_crps_scalar(x, y);
        ref += gaussian_crps(mu, sigma, y);
    }
    CHECK(std::abs(est / ref - 1.0) < 0.01);
}

TEST_CASE("fair CRPS is unbiased across ensemble sizes") {
    Rng rng(33);
    const int n = 100000;
    double s2 = 0.0, s10 = 0.0;
    std::vector<double> x(10);
    for (int i = 0; i < n; ++i) {
        for (double& v : x) v = rng.normal();
        const double y = 0.5 + 1.2 * rng.normal();
        s10 += fair_crps_scalar(x, y);
        s2 += fair_crps_scalar(std::span<const double>(x).first(2), y);  // paired draws
    }
    // Per-draw sd of the M = 2 estimator is ~0.7; 4 standard errors ~ 0.009.
    CHECK(std::abs(s2 / n - s10 / n) < 0.01);
}

TEST_CASE("energy score: reductions and direct evaluation") {
    SUBCASE("one dimension equals CRPS") {
        Rng rng(4);
        for (int trial = 0; trial < 20; ++trial) {
            std::vector<std::vector<double>> z(3 + trial % 4, std::vector<double>(1));
            std::vector<double> flat;
            for (auto& v : z) {
                v[0] = rng.normal();
                flat.push_back(v[0]);
            }
            const std::vector<double> y{rng.normal()};
            CHECK(fair_energy_score_vec(z, y) == doctest::Approx(fair_crps_scalar(flat, y[0])).epsilon(1e-14));
        }
    }
    SUBCASE("two-pixel direct formula") {
        const std::vector<std::vector<double>> z{{0.0, 1.0}, {3.0, -1.0}, {1.0, 1.0}};
        const std::vector<double> y{1.0, 0.0};
        const double d_y = (std::sqrt(2.0) + std::sqrt(5.0) + 1.0) / 3.0;
        const double d_xx = 2.0 * (std::sqrt(13.0) + 1.0 + std::sqrt(8.0)) / (2.0 * 3.0 * 2.0);
        CHECK(std::abs(fair_energy_score_vec(z, y) - (d_y - d_xx)) < 1e-12);
    }
    SUBCASE("spatially constant single-channel fields equal CRPS") {
        auto g = make_grid_ptr(4, 8);
        auto cat = test::catalog({{"t2m", std::nullopt}});
        const Field z = Field::zeros(g, cat);
        auto v = make_verif({{{constant_like(z, 0.3)}, {constant_like(z, -1.0)}, {constant_like(z, 2.0)}}},
                            {{constant_like(z, 0.5)}});
        CHECK(energy_score(v.fc, v.truth)[0] == doctest::Approx(fair_crps(v.fc, v.truth)[0][0]).epsilon(1e-13));
        auto same = make_verif({{{z}, {z}}}, {{z}});
        CHECK(energy_score(same.fc, same.truth)[0] == 0.0);
    }
}

TEST_CASE("fair Brier: hand values and calibrated Monte Carlo") {
    auto g = make_grid_ptr(4, 8);
    auto cat = test::catalog({{"t2m", std::nullopt}});
    const Field zero = Field::zeros(g, cat);
    const Field one = constant_like(zero, 1.0);
    SUBCASE("all exceed") {
        auto v = make_verif({{{one}, {one}}}, {{one}});
        CHECK(fair_brier_at(v.fc, v.truth, zero)[0][0] == 0.0);
    }
    SUBCASE("one of two members exceeds, truth does not") {
        auto v = make_verif({{{one}, {zero}}}, {{zero}});
        CHECK(fair_brier_at(v.fc, v.truth, constant_like(zero, 0.5))[0][0] == doctest::Approx(0.0).epsilon(1e-15));
    }
    SUBCASE("calibrated ensemble recovers p(1 - p)") {
        Rng rng(17);
        auto v = random_verif(make_grid_ptr(32, 64), cat, 50, 3, 1, rng);
        // P(x > 0) = 0.5 for members and truth alike.
        const Field thr = Field::zeros(make_grid_ptr(32, 64), cat);
        CHECK(fair_brier_at(v.fc, v.truth, thr)[0][0] == doctest::Approx(0.25).epsilon(0.01));
    }
    SUBCASE("quantile pairing and range") {
        Climatology clim = flat_climatology(zero);
        clim.quantile_levels = {0.1, 0.9};
        clim.quantiles = {constant_like(zero, -1.0), constant_like(zero, 1.0)};
        auto v = make_verif({{{constant_like(zero, 2.0)}, {zero}}}, {{zero}});
        // Lower threshold: p = 1, obs 1 -> 0. Upper: p = 0.5, obs 0 -> 0.25 - 0.25.
        CHECK(fair_brier(v.fc, v.truth, clim, 0.1)[0][0] == doctest::Approx(0.0).epsilon(1e-15));
        CHECK_THROWS_AS(fair_brier(v.fc, v.truth, clim, 1.0), ValidationError);
        CHECK_THROWS_AS(fair_brier(v.fc, v.truth, clim, 0.05), ValidationError);
    }
}

TEST_CASE("spread-skill ratio") {
    auto cat = test::catalog({{"t2m", std::nullopt}});
    SUBCASE("collapsed ensemble has zero spread") {
        auto g = make_grid_ptr(4, 8);
        Rng rng(1);
        Field x = test::random_field(g, cat, rng), y = test::random_field(g, cat, rng);
        auto v = make_verif({{{x}, {x}, {x}}}, {{y}});
        CHECK(spread_skill_ratio(v.fc, v.truth)[0][0] < 1e-15);
        auto exact = make_verif({{{y}, {y}}}, {{y}});
        CHECK_THROWS_AS(spread_skill_ratio(exact.fc, exact.truth), NumericalError);
    }
    SUBCASE("calibrated Gaussian ensemble") {
        Rng rng(7);
        auto v = random_verif(make_grid_ptr(80, 128), cat, 1, 10, 1, rng);
        CHECK(std::abs(spread_skill_ratio(v.fc, v.truth)[0][0] - 1.0) < 0.05);
    }
    SUBCASE("duplicated members") {
        Rng rng(12);
        auto v2 = random_verif(make_grid_ptr(8, 16), cat, 3, 2, 1, rng);
        Verif v4 = v2;
        for (auto& e : v4.fc) {
            auto copy = e.members;
            e.members.insert(e.members.end(), copy.begin(), copy.end());
        }
        // Same members counted twice: unbiased variance scales by 2 (M-1)/(2M-1) = 2/3.
        const double s2 = ensemble_spread(v2.fc, v2.truth)[0][0];
        const double s4 = ensemble_spread(v4.fc, v4.truth)[0][0];
        CHECK(s4 == doctest::Approx(std::sqrt(2.0 / 3.0) * s2).epsilon(1e-12));
        CHECK(ens_mean_rmse(v4.fc, v4.truth)[0][0] == doctest::Approx(ens_mean_rmse(v2.fc, v2.truth)[0][0]));
    }
}

TEST_CASE("skill scores") {
    CHECK(skill_score(1.0, 1.0) == 0.0);
    CHECK(skill_score(0.0, 2.0) == 1.0);
    CHECK(skill_score(0.9, 1.0) == doctest::Approx(0.1));
    CHECK_THROWS_AS(skill_score(1.0, 0.0), ValidationError);

    MetricReport model, ref;
    model.rows = {{"crps", "t2m", 24, {}, 0.9}, {"crps", "z500", 24, {}, 1.6}, {"ssr", "t2m", 24, {}, 1.0}};
    ref.rows = {{"crps", "t2m", 24, {}, 1.0}, {"crps", "z500", 24, {}, 2.0}, {"ssr", "t2m", 24, {}, 0.5}};
    const auto ss = skill_report(model, ref);
    REQUIRE(ss.rows.size() == 2);
    const auto avg = average_skill(ss, "crps_ss");
    REQUIRE(avg.size() == 1);
    CHECK(avg[0].second == doctest::Approx(0.15));
    CHECK(average_skill(ss, "crps_ss", {"z500"})[0].second == doctest::Approx(0.2));
}

TEST_CASE("metric report covers every estimator and round-trips through CSV") {
    auto g = make_grid_ptr(4, 8);
    auto cat = test::two_channels();
    Rng rng(6);
    auto v = random_verif(g, cat, 2, 3, 2, rng);
    Climatology clim = flat_climatology(Field::zeros(g, cat));
    clim.quantile_levels = {0.1, 0.9};
    clim.quantiles = {constant_like(clim.slot_mean[0], -1.0), constant_like(clim.slot_mean[0], 1.0)};
    const auto rep = evaluate_ensembles(v.fc, v.truth, clim, {0.1});
    CHECK(rep.n_members == 3);
    CHECK(rep.find("crps", "t2m", 48) != nullptr);
    CHECK(rep.find("brier", "z500", 24, 0.1) != nullptr);
    CHECK(rep.find("energy", "", 48) != nullptr);
    CHECK(rep.find("crps", "t2m", 48)->value == doctest::Approx(fair_crps(v.fc, v.truth)[0][1]));

    const auto path = std::filesystem::temp_directory_path() / "fmsr_metrics.csv";
    write_metric_csv(path, rep);
    const auto back = read_metric_csv(path);
    REQUIRE(back.rows.size() == rep.rows.size());
    for (std::size_t i = 0; i < rep.rows.size(); ++i) {
        CHECK(back.rows[i].metric == rep.rows[i].metric);
        CHECK(back.rows[i].q.has_value() == rep.rows[i].q.has_value());
        CHECK(back.rows[i].value == doctest::Approx(rep.rows[i].value).epsilon(1e-10));
    }
    std::filesystem::remove(path);
}
