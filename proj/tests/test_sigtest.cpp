#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "fmsr/errors.hpp"
#include "fmsr/sigtest.hpp"

using namespace fmsr;

namespace {

std::vector<double> ar1(std::size_t n, double phi, double mean, Rng& rng) {
    std::vector<double> x(n);
    double a = rng.normal() / std::sqrt(1.0 - phi * phi);
    for (std::size_t t = 0; t < n; ++t) {
        a = phi * a + rng.normal();
        x[t] = mean + a;
    }
    return x;
}

}  // namespace

TEST_CASE("auto block length: white noise, AR(1) ordering, constant") {
    for (std::uint64_t s = 0; s < 20; ++s) {
        Rng r1 = Rng::keyed(100, {s}), r2 = Rng::keyed(100, {s});
        const auto white = ar1(512, 0.0, 0.0, r1);
        const auto red = ar1(512, 0.8, 0.0, r2);  // same innovations
        const double bw = auto_block_length(white);
        CHECK(bw <= 4.0);
        CHECK(auto_block_length(red) > bw);
    }
    CHECK(auto_block_length(std::vector<double>(64, 2.5)) == 1.0);
    CHECK_THROWS_AS(auto_block_length(std::vector<double>(7, 1.0)), ValidationError);
    Rng rng(1);
    const auto x = ar1(30, 0.99, 0.0, rng);
    CHECK(auto_block_length(x) <= 10.0);
}

TEST_CASE("stationary bootstrap with unit blocks is uniform resampling") {
    const std::size_t n = 10;
    std::vector<double> counts(n, 0.0);
    Rng rng(5);
    std::size_t draws = 0;
    for (int r = 0; r < 10000; ++r) {
        const auto idx = stationary_bootstrap_indices(n, 1.0, rng);
        for (std::size_t i : idx) counts[i] += 1.0;
        draws += idx.size();
    }
    const double expected = static_cast<double>(draws) / static_cast<double>(n);
    double chi2 = 0.0;
    for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
    // 0.999 quantile of chi-square with 9 degrees of freedom.
    CHECK(chi2 < 27.877);
}

TEST_CASE("stationary bootstrap resamples come from the series") {
    const std::vector<double> x{1.5, -2.0, 3.25, 7.0, 0.0, 11.0, -4.5, 2.0, 9.5};
    Rng rng(8);
    for (int r = 0; r < 100; ++r) {
        for (double v : stationary_bootstrap_resample(x, 3.0, rng)) {
            CHECK(std::find(x.begin(), x.end(), v) != x.end());
        }
    }
}

TEST_CASE("stationary bootstrap block runs are geometric with the requested mean") {
    const std::size_t n = 100000;
    const double L = 5.0;
    Rng rng(13);
    const auto idx = stationary_bootstrap_indices(n, L, rng);
    std::size_t runs = 1;
    for (std::size_t t = 1; t < n; ++t)
        if (idx[t] != (idx[t - 1] + 1) % n) ++runs;
    const double mean_run = static_cast<double>(n) / static_cast<double>(runs);
    CHECK(std::abs(mean_run / L - 1.0) < 0.05);
}

TEST_CASE("BCa reduces to the percentile interval when z0 = 0 and a = 0") {
    std::vector<double> reps;
    for (int i = -500; i <= 500; ++i) reps.push_back(0.01 * i);  // symmetric, median 0
    const auto pct = percentile_interval(reps, 0.95);
    const auto bca = bca_endpoints(reps, 0.0, 0.0, 0.95);
    CHECK(bca.first == doctest::Approx(pct.first).epsilon(1e-12));
    CHECK(bca.second == doctest::Approx(pct.second).epsilon(1e-12));
    CHECK(pct.first == doctest::Approx(-4.75));
}

TEST_CASE("jackknife acceleration of the mean") {
    CHECK(jackknife_acceleration(std::vector<double>{1.0, 2.0, 3.0, 4.0}) == doctest::Approx(0.0).epsilon(1e-15));
    // Right-skewed data give positive acceleration.
    CHECK(jackknife_acceleration(std::vector<double>{0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 10.0}) > 0.0);
}

TEST_CASE("bca interval: degenerate series, contains estimate, deterministic") {
    const std::vector<double> zeros(20, 0.0);
    const auto z = bca_interval(zeros, 1, 1000);
    CHECK(z.degenerate);
    CHECK(z.lo == 0.0);
    CHECK(z.hi == 0.0);
    CHECK_FALSE(z.significant);

    Rng rng(3);
    const auto x = ar1(200, 0.5, 0.3, rng);
    const auto r1 = bca_interval(x, 42, 2000);
    const auto r2 = bca_interval(x, 42, 2000);
    CHECK(r1.lo <= r1.estimate);
    CHECK(r1.estimate <= r1.hi);
    CHECK(r1.lo == r2.lo);
    CHECK(r1.hi == r2.hi);
    CHECK_THROWS_AS(bca_interval(x, 1, 999), ValidationError);

    std::vector<double> shifted = x;
    for (double& v : shifted) v += 5.0;
    CHECK(bca_interval(shifted, 42, 2000).significant);
}

TEST_CASE("score CSV pairing") {
    std::vector<ScoreRow> a, b;
    for (int t = 0; t < 10; ++t) {
        a.push_back({"crps", "t2m", 24, t * 24, 1.0 + t});
        b.push_back({"crps", "t2m", 24, t * 24, 0.5 + t});
    }
    const auto dir = std::filesystem::temp_directory_path();
    write_score_csv(dir / "fmsr_a.csv", a);
    const auto back = read_score_csv(dir / "fmsr_a.csv");
    REQUIRE(back.size() == a.size());
    CHECK(back[3].init_time == 72);
    const auto pairs = pair_scores(back, b);
    REQUIRE(pairs.size() == 1);
    for (double d : pairs[0].diffs) CHECK(d == doctest::Approx(0.5));
    b.pop_back();
    CHECK_THROWS_AS(pair_scores(a, b), ValidationError);
    std::filesystem::remove(dir / "fmsr_a.csv");
}
