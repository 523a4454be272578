#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "fmsr/flow_match.hpp"
#include "support.hpp"

namespace fmsr::test {

// Unconditional toy: every pixel of the target is iid N(mean, sd^2).
struct ToyResult {
    double mean = 0.0;
    double sd = 0.0;
    double ks = 1.0;
    std::size_t n_draws = 0;
    std::vector<double> loss_history;
};

struct ToySetup {
    std::size_t n_samples = 512;
    std::size_t width = 8;
    std::size_t n_blocks = 2;
    std::size_t n_train_steps = 6000;
    double learning_rate = 3e-3;
    std::size_t n_draws = 10000;
    double mean = 3.0;
    double sd = 0.5;
    std::uint64_t seed = 1;
};

inline ToyResult run_toy(const ToySetup& s) {
    auto g = make_grid_ptr(4, 8);
    auto cat = catalog({{"x", std::nullopt}});
    Rng rng = Rng::keyed(s.seed, {99});
    std::vector<ResidualSample> samples;
    for (std::size_t i = 0; i < s.n_samples; ++i) {
        Field f = random_field(g, cat, rng);
        for (double& v : f.values()) v = s.mean + s.sd * v;
        samples.push_back({f, f, std::nullopt});
    }
    NetArch arch;
    arch.n_channels = 1;
    arch.n_cond = 0;
    arch.width = s.width;
    arch.n_blocks = s.n_blocks;
    arch.n_freq = 4;
    VelocityNet<float> net(arch);
    net.initialize(s.seed);
    FMConfig cfg;
    cfg.learning_rate = s.learning_rate;
    cfg.n_train_steps = s.n_train_steps;
    cfg.seed = s.seed;
    cfg.cosine_decay = true;
    ToyResult out;
    out.loss_history = train(samples, net, cfg).loss_history;

    auto v = net_velocity(net, {}, 4, 8);
    std::vector<double> draws;
    for (std::size_t d = 0; draws.size() < s.n_draws; ++d) {
        Rng r = Rng::keyed(s.seed, {7, d});
        Field x = sample_residual(v, samples.front().target, cfg, r);
        for (double val : x.values()) {
            if (draws.size() < s.n_draws) draws.push_back(val);
        }
    }
    double sum = 0.0;
    for (double d : draws) sum += d;
    out.mean = sum / static_cast<double>(draws.size());
    double ss = 0.0;
    for (double d : draws) ss += (d - out.mean) * (d - out.mean);
    out.sd = std::sqrt(ss / static_cast<double>(draws.size()));
    std::sort(draws.begin(), draws.end());
    const double n = static_cast<double>(draws.size());
    double ks = 0.0;
    for (std::size_t i = 0; i < draws.size(); ++i) {
        const double cdf = 0.5 * std::erfc(-(draws[i] - s.mean) / (s.sd * std::sqrt(2.0)));
        ks = std::max({ks, std::abs(cdf - i / n), std::abs((i + 1) / n - cdf)});
    }
    out.ks = ks;
    out.n_draws = draws.size();
    return out;
}

}  // namespace fmsr::test
