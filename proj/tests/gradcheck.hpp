#pragma once

#include <cmath>
#include <vector>

#include "fmsr/diffnet.hpp"
#include "fmsr/rng.hpp"

namespace fmsr::test {

struct GradCheckResult {
    std::size_t n_params = 0;
    std::size_t n_failed = 0;
    double worst = 0.0;  // max |analytic - fd| / (|analytic| + 1e-8)
};

// Central finite differences of L = sum(upstream * forward) for every parameter.
inline GradCheckResult grad_check(const NetArch& arch, std::uint64_t seed, std::size_t n_lat, std::size_t n_lon,
                                  double step = 1e-4, double tol = 1e-4) {
    VelocityNet<double> net(arch);
    net.initialize(seed, /*zero_output=*/false);
    Rng rng = Rng::keyed(seed, {1});
    const std::size_t P = n_lat * n_lon;
    std::vector<double> x(arch.n_channels * P), c(arch.n_cond * P), u(arch.n_channels * P);
    for (double& v : x) v = rng.normal();
    for (double& v : c) v = rng.normal();
    for (double& v : u) v = rng.normal();
    const double tau = rng.uniform();

    Tape<double> tape;
    forward<double>(net, x, c, n_lat, n_lon, tau, &tape);
    const std::vector<double> grad = backward<double>(net, tape, u);

    auto loss = [&](const VelocityNet<double>& n) {
        const auto y = forward<double>(n, x, c, n_lat, n_lon, tau);
        double acc = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) acc += u[i] * y[i];
        return acc;
    };
    GradCheckResult res;
    res.n_params = net.param_count();
    for (std::size_t i = 0; i < net.param_count(); ++i) {
        const double orig = net.params()[i];
        net.mutable_params()[i] = orig + step;
        const double lp = loss(net);
        net.mutable_params()[i] = orig - step;
        const double lm = loss(net);
        net.mutable_params()[i] = orig;
        const double fd = (lp - lm) / (2.0 * step);
        const double rel = std::abs(grad[i] - fd) / (std::abs(grad[i]) + 1e-8);
        res.worst = std::max(res.worst, rel);
        if (!(rel < tol)) ++res.n_failed;
    }
    return res;
}

}  // namespace fmsr::test
