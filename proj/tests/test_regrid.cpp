#include "doctest.h"

#include <cmath>

#include "fmsr/errors.hpp"
#include "fmsr/regrid.hpp"
#include "support.hpp"

using namespace fmsr;

namespace {

struct World {
    GridPtr hr = make_grid_ptr(48, 96);
    GridPtr lr = make_grid_ptr(8, 16);
    RegridPlan down = RegridPlan::conservative(hr, lr);
    RegridPlan up = RegridPlan::bicubic(lr, hr);
};

}  // namespace

TEST_CASE("catmull-rom weights are a partition of unity and interpolate at nodes") {
    for (double t : {0.0, 0.1, 0.25, 0.5, 0.9}) {
        auto w = catmull_rom_weights(t);
        CHECK(w[0] + w[1] + w[2] + w[3] == doctest::Approx(1.0).epsilon(1e-15));
    }
    auto w0 = catmull_rom_weights(0.0);
    CHECK(w0[1] == 1.0);
    CHECK(w0[0] == 0.0);
    CHECK(w0[2] == 0.0);
}

TEST_CASE("plans reject non-nesting grids") {
    CHECK_THROWS_AS(RegridPlan::conservative(make_grid_ptr(48, 96), make_grid_ptr(10, 16)), ValidationError);
    CHECK_THROWS_AS(RegridPlan::bicubic(make_grid_ptr(8, 14), make_grid_ptr(48, 96)), ValidationError);
}

TEST_CASE("coarsen conserves the weighted mean") {
    World w;
    Rng rng(7);
    auto cat = test::two_channels();
    for (int i = 0; i < 20; ++i) {
        Field f = test::random_field(w.hr, cat, rng, 280.0);
        Field c = coarsen(f, w.down);
        auto a = weighted_mean(f);
        auto b = weighted_mean(c);
        for (std::size_t ch = 0; ch < 2; ++ch) CHECK(std::abs(a[ch] - b[ch]) <= 1e-12 * std::abs(a[ch]));
    }
}

TEST_CASE("coarsen of a constant is the constant and identity plan is exact") {
    World w;
    auto cat = test::two_channels();
    Field f(w.hr, cat, std::vector<double>(w.hr->size() * 2, -4.5));
    Field c = coarsen(f, w.down);
    for (double v : c.values()) CHECK(v == doctest::Approx(-4.5).epsilon(1e-15));

    Rng rng(3);
    Field g = test::random_field(w.lr, cat, rng);
    Field same = coarsen(g, RegridPlan::conservative(w.lr, w.lr));
    for (std::size_t i = 0; i < g.values().size(); ++i) CHECK(same.values()[i] == doctest::Approx(g.values()[i]));
}

TEST_CASE("coarsen rejects a field on the wrong grid") {
    World w;
    Rng rng(1);
    Field f = test::random_field(w.lr, test::two_channels(), rng);
    CHECK_THROWS_AS(coarsen(f, w.down), ValidationError);
    CHECK_THROWS_AS(interpolate_up(f, w.down), ValidationError);
}

TEST_CASE("bicubic upsampling of a constant is exact") {
    World w;
    auto cat = test::two_channels();
    Field f(w.lr, cat, std::vector<double>(w.lr->size() * 2, 12.0));
    Field up = interpolate_up(f, w.up);
    for (double v : up.values()) CHECK(v == doctest::Approx(12.0).epsilon(1e-14));
}

TEST_CASE("bicubic reproduces quadratics and has the known cubic response") {
    World w;
    auto cat = test::catalog({{"t2m", std::nullopt}});
    const double a = 0.3, b = -1.2, c = 0.05, d = 0.01;
    auto poly = [&](double x) { return a + b * x + c * x * x + d * x * x * x; };
    Field f = Field::zeros(w.lr, cat);
    for (std::size_t j = 0; j < 8; ++j)
        for (std::size_t k = 0; k < 16; ++k) f.at(0, j, k) = poly(static_cast<double>(k));
    Field up = interpolate_up(f, w.up);
    int checked = 0;
    for (std::size_t i = 0; i < 96; ++i) {
        const double u = (2.0 * i + 1.0 - 6.0) / 12.0;
        const double base = std::floor(u);
        if (base - 1 < 0 || base + 2 > 15) continue;  // stencil wraps
        const double t = u - base;
        const double expected = poly(u) + d * t * (t - 1.0) * (2.0 * t - 1.0);
        for (std::size_t j = 0; j < 48; ++j) CHECK(up.at(0, j, i) == doctest::Approx(expected).epsilon(1e-12));
        ++checked;
    }
    CHECK(checked > 60);
}

TEST_CASE("longitude wraps and latitude clamps") {
    World w;
    auto cat = test::catalog({{"t2m", std::nullopt}});
    // A pure zonal harmonic stays periodic after upsampling.
    Field f = Field::zeros(w.lr, cat);
    for (std::size_t j = 0; j < 8; ++j)
        for (std::size_t k = 0; k < 16; ++k) f.at(0, j, k) = std::cos(2.0 * 3.141592653589793 * k / 16.0);
    Field up = interpolate_up(f, w.up);
    // The harmonic is even about coarse column 0, i.e. fine position 2.5.
    // Fine columns 95 and 94 need wrapped stencils; their mirrors 6 and 7 do not.
    for (std::size_t j = 0; j < 48; ++j) {
        CHECK(up.at(0, j, 0) == doctest::Approx(up.at(0, j, 5)).epsilon(1e-12));
        CHECK(up.at(0, j, 95) == doctest::Approx(up.at(0, j, 6)).epsilon(1e-12));
        CHECK(up.at(0, j, 94) == doctest::Approx(up.at(0, j, 7)).epsilon(1e-12));
    }
    // Southernmost fine rows see a clamped stencil: a field constant in
    // longitude and linear in latitude index stays within the coarse range.
    Field g = Field::zeros(w.lr, cat);
    for (std::size_t j = 0; j < 8; ++j)
        for (std::size_t k = 0; k < 16; ++k) g.at(0, j, k) = static_cast<double>(j);
    Field gu = interpolate_up(g, w.up);
    for (std::size_t k = 0; k < 96; ++k) {
        CHECK(gu.at(0, 0, k) >= -0.5);
        CHECK(gu.at(0, 47, k) <= 7.5);
    }
}

TEST_CASE("coarsen after interpolate_up approximately recovers a smooth field") {
    World w;
    Rng rng(11);
    auto cat = test::two_channels();
    for (int i = 0; i < 10; ++i) {
        Field x = test::smooth_field(w.lr, cat, rng);
        Field back = coarsen(interpolate_up(x, w.up), w.down);
        for (std::size_t c = 0; c < 2; ++c) {
            double se = 0.0, ss = 0.0;
            auto a = x.channel(c);
            auto b = back.channel(c);
            const double mean = weighted_mean(x)[c];
            for (std::size_t p = 0; p < a.size(); ++p) {
                se += (a[p] - b[p]) * (a[p] - b[p]);
                ss += (a[p] - mean) * (a[p] - mean);
            }
            CHECK(std::sqrt(se / ss) < 0.05);
        }
    }
}

TEST_CASE("recoarsen_for_validation is coarsen") {
    World w;
    Rng rng(5);
    Field f = test::random_field(w.hr, test::two_channels(), rng);
    Field a = coarsen(f, w.down);
    Field b = recoarsen_for_validation(f, w.down);
    for (std::size_t i = 0; i < a.values().size(); ++i) CHECK(a.values()[i] == b.values()[i]);
}
