#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "fmsr/errors.hpp"
#include "fmsr/flow_match.hpp"
#include "support.hpp"
#include "toy.hpp"

using namespace fmsr;

TEST_CASE("timestep schedule") {
    CHECK(timestep_from_normal(0.0) == 0.5);
    Rng rng(123);
    std::vector<double> t(100000);
    for (double& v : t) v = sample_timestep(rng);
    for (double v : t) REQUIRE((v > 0.0 && v < 1.0));
    std::vector<double> sorted(t);
    std::nth_element(sorted.begin(), sorted.begin() + 50000, sorted.end());
    CHECK(std::abs(sorted[50000] - 0.5) < 0.01);
    // P(tau < sigmoid(-1)) = Phi(-1) = 0.158655...
    const double cut = 1.0 / (1.0 + std::exp(1.0));
    const double frac = std::count_if(t.begin(), t.end(), [&](double v) { return v < cut; }) / 1e5;
    CHECK(std::abs(frac - 0.15865525393145707) < 0.01);
}

TEST_CASE("path points") {
    auto g = make_grid_ptr(4, 8);
    auto cat = test::two_channels();
    Rng rng(5);
    Field r0 = test::random_field(g, cat, rng);
    Field eps = test::random_field(g, cat, rng);
    PathPoint p0 = make_path_point(r0, eps, 0.0);
    PathPoint p1 = make_path_point(r0, eps, 1.0);
    for (std::size_t i = 0; i < r0.values().size(); ++i) {
        CHECK(p0.noisy.values()[i] == eps.values()[i]);
        CHECK(p1.noisy.values()[i] == r0.values()[i]);
    }
    CHECK(p0.alpha + p0.sigma == 1.0);
    PathPoint a = make_path_point(r0, eps, 0.1);
    PathPoint b = make_path_point(r0, eps, 0.9);
    for (std::size_t i = 0; i < r0.values().size(); ++i) {
        CHECK(a.target_velocity.values()[i] == b.target_velocity.values()[i]);
    }

    Field two(g, cat, std::vector<double>(g->size() * 2, 2.0));
    Field zero = Field::zeros(g, cat);
    PathPoint h = make_path_point(two, zero, 0.5);
    for (std::size_t i = 0; i < two.values().size(); ++i) {
        CHECK(h.noisy.values()[i] == 1.0);
        CHECK(h.target_velocity.values()[i] == 2.0);
    }
    CHECK_THROWS_AS(make_path_point(two, Field::zeros(make_grid_ptr(2, 4), cat), 0.5), ValidationError);
}

TEST_CASE("weighted loss") {
    auto g = make_grid_ptr(4, 8);
    auto cat = test::catalog({{"t2m", std::nullopt}, {"u10m", std::nullopt}});
    Rng rng(2);
    Field x = test::random_field(g, cat, rng);
    CHECK(weighted_fm_loss(x, x) == 0.0);
    Field ones(g, cat, std::vector<double>(x.values().size(), 1.0));
    CHECK(weighted_fm_loss(ones, Field::zeros(g, cat)) == doctest::Approx(1.0).epsilon(1e-14));

    // Unit error only in the northernmost row: (1 - sin 45) / 2.
    Field north = Field::zeros(g, cat);
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t k = 0; k < 8; ++k) north.at(c, 3, k) = 1.0;
    CHECK(weighted_fm_loss(north, Field::zeros(g, cat)) == doctest::Approx(0.14644660940672624).epsilon(1e-14));

    // Level weights enter multiplicatively.
    auto upper = test::catalog({{"z", 500}});
    Field e(g, upper, std::vector<double>(g->size(), 1.0));
    CHECK(weighted_fm_loss(e, Field::zeros(g, upper)) == doctest::Approx(500.0 * 13.0 / 6025.0));
}

TEST_CASE("weighted loss gradient matches finite differences") {
    auto g = make_grid_ptr(4, 8);
    auto cat = test::two_channels();
    Rng rng(8);
    Field p = test::random_field(g, cat, rng);
    Field t = test::random_field(g, cat, rng);
    std::vector<double> pred(p.values().begin(), p.values().end());
    std::vector<double> grad(pred.size());
    weighted_fm_loss<double>(pred, t.values(), *g, *cat, grad);
    for (std::size_t i = 0; i < pred.size(); i += 7) {
        const double orig = pred[i];
        pred[i] = orig + 1e-6;
        const double lp = weighted_fm_loss<double>(pred, t.values(), *g, *cat);
        pred[i] = orig - 1e-6;
        const double lm = weighted_fm_loss<double>(pred, t.values(), *g, *cat);
        pred[i] = orig;
        CHECK(grad[i] == doctest::Approx((lp - lm) / 2e-6).epsilon(1e-6));
    }
}

TEST_CASE("config JSON and validation") {
    FMConfig cfg = FMConfig::from_json({{"learning_rate", 1e-3}, {"integrator", "heun"}});
    CHECK(cfg.learning_rate == 1e-3);
    CHECK(cfg.integrator == Integrator::heun);
    CHECK(cfg.n_sample_steps == 50);
    CHECK(cfg.beta2 == 0.98);
    CHECK(FMConfig::from_json(cfg.to_json()).to_json() == cfg.to_json());
    CHECK_THROWS_AS(FMConfig::from_json({{"n_sample_steps", 0}}), ValidationError);
    CHECK_THROWS_AS(FMConfig::from_json({{"learning_rate", -1.0}}), ValidationError);
    CHECK_THROWS_AS(FMConfig::from_json({{"integrator", "rk4"}}), ValidationError);
}

TEST_CASE("sampler with oracle velocities") {
    auto g = make_grid_ptr(4, 8);
    auto cat = test::two_channels();
    Field like = Field::zeros(g, cat);
    FMConfig cfg;
    SUBCASE("constant velocity: eps + v") {
        VelocityFn v = [](std::span<const double> s, double) { return std::vector<double>(s.size(), 0.75); };
        for (Integrator integ : {Integrator::euler, Integrator::heun}) {
            cfg.integrator = integ;
            Rng a(3), b(3);
            Field out = sample_residual(v, like, cfg, a);
            for (double x : out.values()) CHECK(x == doctest::Approx(b.normal() + 0.75).epsilon(1e-13));
        }
    }
    SUBCASE("zero velocity leaves N(0, 1) noise") {
        VelocityFn v = [](std::span<const double> s, double) { return std::vector<double>(s.size(), 0.0); };
        Field big = Field::zeros(make_grid_ptr(50, 100), test::catalog({{"t2m", std::nullopt}}));
        Rng rng(9);
        Field out = sample_residual(v, big, cfg, rng);
        double m = 0.0, s = 0.0;
        for (double x : out.values()) m += x;
        m /= 5000.0;
        for (double x : out.values()) s += (x - m) * (x - m);
        s /= 5000.0;
        CHECK(std::abs(m) < 0.02 * 2);  // 5000 pixels; spec tolerance is for 1e4
        CHECK(s > 0.96);
        CHECK(s < 1.04);
    }
    SUBCASE("non-finite state names the step") {
        VelocityFn v = [](std::span<const double> s, double tau) {
            return std::vector<double>(s.size(), tau > 0.2 ? std::nan("") : 0.0);
        };
        Rng rng(1);
        try {
            sample_residual(v, like, cfg, rng);
            FAIL("expected NumericalError");
        } catch (const NumericalError& e) {
            CHECK(std::string(e.what()).find("step 12 of 50") != std::string::npos);
        }
    }
    SUBCASE("linear velocity: Euler and Heun amplification factors") {
        // dr/dtau = -r. Per step Euler multiplies by (1 - h), Heun by (1 - h + h^2 / 2).
        VelocityFn v = [](std::span<const double> s, double) {
            std::vector<double> out(s.begin(), s.end());
            for (double& x : out) x = -x;
            return out;
        };
        Rng a(4), b(4), c(4);
        cfg.integrator = Integrator::euler;
        Field e = sample_residual(v, like, cfg, a);
        cfg.integrator = Integrator::heun;
        Field h = sample_residual(v, like, cfg, b);
        for (std::size_t i = 0; i < like.values().size(); ++i) {
            const double eps = c.normal();
            const double step = 1.0 / 50.0;
            CHECK(e.values()[i] == doctest::Approx(eps * std::pow(1.0 - step, 50)).epsilon(1e-12));
            CHECK(h.values()[i] == doctest::Approx(eps * std::pow(1.0 - step + 0.5 * step * step, 50)).epsilon(1e-12));
            CHECK(std::abs(h.values()[i] - eps * std::exp(-1.0)) < 1e-4 * std::abs(eps));
        }
    }
}

TEST_CASE("sample_residual with a network is reproducible and draws differ") {
    auto g = make_grid_ptr(4, 8);
    auto cat = test::two_channels();
    NetArch arch;
    arch.n_channels = 2;
    arch.n_cond = 2;
    arch.width = 4;
    arch.n_blocks = 1;
    VelocityNet<float> net(arch);
    net.initialize(3, false);
    Rng rng(2);
    Field cond = test::random_field(g, cat, rng);
    FMConfig cfg;
    cfg.n_sample_steps = 10;
    Rng a(5), b(5), c(6);
    Field x = sample_residual(net, cond, cfg, a);
    Field y = sample_residual(net, cond, cfg, b);
    Field z = sample_residual(net, cond, cfg, c);
    CHECK(std::memcmp(x.values().data(), y.values().data(), x.values().size() * sizeof(double)) == 0);
    CHECK(x.values()[0] != z.values()[0]);
    Field wrong = test::random_field(g, test::catalog({{"t2m", std::nullopt}}), rng);
    CHECK_THROWS_AS(sample_residual(net, wrong, cfg, a), ValidationError);
}

TEST_CASE("training: zero learning rate leaves parameters unchanged") {
    auto g = make_grid_ptr(4, 8);
    auto cat = test::two_channels();
    Rng rng(3);
    std::vector<ResidualSample> s;
    for (int i = 0; i < 4; ++i) s.push_back({test::random_field(g, cat, rng), test::random_field(g, cat, rng), i});
    NetArch arch;
    arch.n_channels = 2;
    arch.n_cond = 2;
    arch.width = 4;
    arch.n_blocks = 1;
    VelocityNet<float> net(arch);
    net.initialize(1, false);
    const std::vector<float> before(net.params().begin(), net.params().end());
    FMConfig cfg;
    cfg.learning_rate = 0.0;
    cfg.n_train_steps = 5;
    auto res = train(s, net, cfg);
    CHECK(res.loss_history.size() == 5);
    CHECK(std::memcmp(before.data(), net.params().data(), before.size() * sizeof(float)) == 0);

    cfg.learning_rate = 1e-3;
    VelocityNet<float> n1(arch), n2(arch);
    n1.initialize(1);
    n2.initialize(1);
    auto h1 = train(s, n1, cfg).loss_history;
    auto h2 = train(s, n2, cfg).loss_history;
    CHECK(h1 == h2);
    CHECK(std::memcmp(n1.params().data(), n2.params().data(), n1.param_count() * sizeof(float)) == 0);
}

TEST_CASE("training rejects mismatched samples and NaN loss") {
    auto g = make_grid_ptr(4, 8);
    auto cat = test::two_channels();
    Rng rng(3);
    NetArch arch;
    arch.n_channels = 1;
    arch.n_cond = 1;
    arch.width = 4;
    arch.n_blocks = 1;
    VelocityNet<float> net(arch);
    std::vector<ResidualSample> s{{test::random_field(g, cat, rng), test::random_field(g, cat, rng), 0}};
    CHECK_THROWS_AS(train(s, net, FMConfig{}), ValidationError);

    auto one = test::catalog({{"t2m", std::nullopt}});
    Field bad = test::random_field(g, one, rng);
    bad.values()[3] = std::nan("");
    std::vector<ResidualSample> t{{test::random_field(g, one, rng), bad, 0}};
    net.initialize(1, false);
    FMConfig cfg;
    cfg.n_train_steps = 3;
    try {
        train(t, net, cfg);
        FAIL("expected NumericalError");
    } catch (const NumericalError& e) {
        CHECK(std::string(e.what()).find("step 0") != std::string::npos);
    }
}

TEST_CASE("toy generative recovery") {
    test::ToySetup setup;
    auto r = test::run_toy(setup);
    INFO("mean " << r.mean << " sd " << r.sd << " ks " << r.ks);
    CHECK(r.n_draws == 10000);
    CHECK(std::abs(r.mean - 3.0) <= 0.1);
    CHECK(std::abs(r.sd - 0.5) <= 0.1);
    CHECK(r.ks < 0.05);
    double lead = 0.0, trail = 0.0;
    for (std::size_t i = 0; i < 100; ++i) {
        lead += r.loss_history[i];
        trail += r.loss_history[r.loss_history.size() - 1 - i];
    }
    CHECK(trail < lead);
}
