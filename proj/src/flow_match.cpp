#include "fmsr/flow_match.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include "fmsr/errors.hpp"
#include "fmsr/parallel.hpp"

namespace fmsr {

void FMConfig::validate() const {
    if (n_sample_steps < 1) throw ValidationError("FMConfig: n_sample_steps must be >= 1");
    if (batch_size < 1) throw ValidationError("FMConfig: batch_size must be >= 1");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        throw ValidationError("FMConfig: learning_rate must be finite and non-negative");
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw ValidationError("FMConfig: betas must lie in [0, 1)");
    }
    if (!(weight_decay >= 0.0) || !(adam_eps > 0.0)) {
        throw ValidationError("FMConfig: weight_decay must be >= 0 and adam_eps > 0");
    }
}

nlohmann::json FMConfig::to_json() const {
    return {{"n_sample_steps", n_sample_steps},
            {"integrator", integrator == Integrator::euler ? "euler" : "heun"},
            {"batch_size", batch_size},
            {"n_train_steps", n_train_steps},
            {"learning_rate", learning_rate},
            {"beta1", beta1},
            {"beta2", beta2},
            {"weight_decay", weight_decay},
            {"adam_eps", adam_eps},
            {"cosine_decay", cosine_decay},
            {"seed", seed}};
}

void FMConfig::update_from_json(const nlohmann::json& j) {
    try {
        n_sample_steps = j.value("n_sample_steps", n_sample_steps);
        if (j.contains("integrator")) {
            const auto name = j.at("integrator").get<std::string>();
            if (name == "euler") integrator = Integrator::euler;
            else if (name == "heun") integrator = Integrator::heun;
            else throw ValidationError("FMConfig: unknown integrator '" + name + "' (expected euler or heun)");
        }
        batch_size = j.value("batch_size", batch_size);
        n_train_steps = j.value("n_train_steps", n_train_steps);
        learning_rate = j.value("learning_rate", learning_rate);
        beta1 = j.value("beta1", beta1);
        beta2 = j.value("beta2", beta2);
        weight_decay = j.value("weight_decay", weight_decay);
        adam_eps = j.value("adam_eps", adam_eps);
        cosine_decay = j.value("cosine_decay", cosine_decay);
        seed = j.value("seed", seed);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("FMConfig JSON: ") + e.what());
    }
    validate();
}

FMConfig FMConfig::from_json(const nlohmann::json& j) {
    FMConfig cfg;
    cfg.update_from_json(j);
    return cfg;
}

double timestep_from_normal(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double sample_timestep(Rng& rng) { return timestep_from_normal(rng.normal()); }

PathPoint make_path_point(const Field& r0, const Field& eps, double tau) {
    require_same_layout(r0, eps, "make_path_point");
    if (!(tau >= 0.0 && tau <= 1.0)) throw ValidationError("make_path_point: tau must lie in [0, 1]");
    const auto a = r0.values();
    const auto e = eps.values();
    std::vector<double> noisy(a.size()), target(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        noisy[i] = tau * a[i] + (1.0 - tau) * e[i];
        target[i] = a[i] - e[i];
    }
    return {tau, tau, 1.0 - tau, r0.with_values(std::move(noisy)), r0.with_values(std::move(target))};
}

template <typename Scalar>
double weighted_fm_loss(std::span<const Scalar> predicted, std::span<const Scalar> target, const GridSpec& grid,
                        const ChannelCatalog& catalog, std::span<Scalar> grad) {
    const std::size_t P = grid.size();
    const std::size_t C = catalog.size();
    if (predicted.size() != C * P || target.size() != C * P || (!grad.empty() && grad.size() != C * P)) {
        throw ValidationError("weighted_fm_loss: array sizes do not match grid and catalog");
    }
    const std::size_t nlon = grid.n_lon();
    const double inv_c = 1.0 / static_cast<double>(C);
    double loss = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
        const double lw = catalog.level_weight(c) * catalog.variable_weight(c);
        double acc = 0.0;
        for (std::size_t j = 0; j < grid.n_lat(); ++j) {
            const double w = grid.area_weight()[j];
            const double coef = 2.0 * lw * w * inv_c;
            double row = 0.0;
            for (std::size_t k = 0; k < nlon; ++k) {
                const std::size_t i = c * P + j * nlon + k;
                const double e = static_cast<double>(predicted[i]) - static_cast<double>(target[i]);
                row += e * e;
                if (!grad.empty()) grad[i] = static_cast<Scalar>(coef * e);
            }
            acc += w * row;
        }
        loss += lw * acc;
    }
    return loss * inv_c;
}

template double weighted_fm_loss<float>(std::span<const float>, std::span<const float>, const GridSpec&,
                                        const ChannelCatalog&, std::span<float>);
template double weighted_fm_loss<double>(std::span<const double>, std::span<const double>, const GridSpec&,
                                         const ChannelCatalog&, std::span<double>);

double weighted_fm_loss(const Field& predicted, const Field& target) {
    require_same_layout(predicted, target, "weighted_fm_loss");
    return weighted_fm_loss<double>(predicted.values(), target.values(), predicted.grid(), predicted.catalog());
}

void AdamW::step(std::span<float> params, std::span<const double> grad, double lr_scale) {
    if (grad.size() != params.size()) throw ValidationError("AdamW: gradient size mismatch");
    if (m_.empty()) {
        m_.assign(params.size(), 0.0);
        v_.assign(params.size(), 0.0);
    }
    ++t_;
    const double b1 = cfg_.beta1, b2 = cfg_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    const double lr = cfg_.learning_rate * lr_scale;
    for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = b1 * m_[i] + (1.0 - b1) * grad[i];
        v_[i] = b2 * v_[i] + (1.0 - b2) * grad[i] * grad[i];
        const double mhat = m_[i] / c1;
        const double vhat = v_[i] / c2;
        const double p = params[i];
        params[i] = static_cast<float>(p - lr * (mhat / (std::sqrt(vhat) + cfg_.adam_eps) + cfg_.weight_decay * p));
    }
}

TrainResult train(std::span<const ResidualSample> samples, VelocityNet<float>& net, const FMConfig& cfg,
                  const std::function<void(std::size_t, double)>& on_step) {
    cfg.validate();
    if (samples.empty()) throw ValidationError("train: no training samples");
    const NetArch& arch = net.arch();
    const Field& first = samples.front().target;
    for (const auto& s : samples) {
        require_same_layout(first, s.target, "train (targets)");
        if (arch.n_cond > 0 && s.conditioning.n_channels() != arch.n_cond) {
            throw ValidationError("train: conditioning channels do not match the network");
        }
        if (arch.n_cond > 0 && !(s.conditioning.grid() == first.grid())) {
            throw ValidationError("train: conditioning and target grids differ");
        }
    }
    if (first.n_channels() != arch.n_channels) {
        throw ValidationError("train: residual channels (" + std::to_string(first.n_channels()) +
                              ") do not match the network (" + std::to_string(arch.n_channels) + ")");
    }
    const std::size_t H = first.n_lat(), W = first.n_lon(), P = H * W;
    const std::size_t n = arch.n_channels * P;
    const std::size_t B = cfg.batch_size;

    AdamW opt(cfg);
    TrainResult result;
    result.loss_history.reserve(cfg.n_train_steps);
    std::vector<std::vector<float>> grads(B);
    std::vector<double> losses(B);
    std::vector<double> total(net.param_count());

    for (std::size_t step = 0; step < cfg.n_train_steps; ++step) {
        Rng pick = Rng::keyed(cfg.seed, {step});
        std::vector<std::size_t> idx(B);
        for (auto& i : idx) i = static_cast<std::size_t>(pick.below(samples.size()));

        parallel_for(B, [&](std::size_t b) {
            const ResidualSample& s = samples[idx[b]];
            Rng rng = Rng::keyed(cfg.seed, {step, b});
            const double tau = sample_timestep(rng);
            std::vector<float> noisy(n), velocity(n), cond;
            const auto r0 = s.target.values();
            for (std::size_t i = 0; i < n; ++i) {
                const double eps = rng.normal();
                noisy[i] = static_cast<float>(tau * r0[i] + (1.0 - tau) * eps);
                velocity[i] = static_cast<float>(r0[i] - eps);
            }
            if (arch.n_cond > 0) cond.assign(s.conditioning.values().begin(), s.conditioning.values().end());
            Tape<float> tape;
            const auto pred = forward<float>(net, noisy, cond, H, W, tau, &tape);
            std::vector<float> upstream(n);
            losses[b] = weighted_fm_loss<float>(pred, velocity, s.target.grid(), s.target.catalog(), upstream);
            const float inv_b = 1.0f / static_cast<float>(B);
            for (float& g : upstream) g *= inv_b;
            grads[b] = backward<float>(net, tape, upstream);
        });

        double loss = 0.0;
        std::fill(total.begin(), total.end(), 0.0);
        for (std::size_t b = 0; b < B; ++b) {
            loss += losses[b];
            for (std::size_t i = 0; i < total.size(); ++i) total[i] += grads[b][i];
        }
        loss /= static_cast<double>(B);
        if (!std::isfinite(loss)) {
            throw NumericalError("train: loss is not finite at step " + std::to_string(step));
        }
        result.loss_history.push_back(loss);
        double scale = 1.0;
        if (cfg.cosine_decay) {
            scale = 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) /
                                          static_cast<double>(cfg.n_train_steps)));
        }
        opt.step(net.mutable_params(), total, scale);
        if (on_step) on_step(step, loss);
    }
    return result;
}

void write_loss_csv(const std::filesystem::path& path, std::span<const double> history) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot open " + path.string() + " for writing");
    out << "step,loss\n";
    out.precision(10);
    for (std::size_t i = 0; i < history.size(); ++i) out << i << ',' << history[i] << '\n';
}

VelocityFn net_velocity(const VelocityNet<float>& net, std::span<const double> conditioning, std::size_t n_lat,
                        std::size_t n_lon) {
    if (conditioning.size() != net.arch().n_cond * n_lat * n_lon) {
        throw ValidationError("net_velocity: conditioning size does not match the network");
    }
    std::vector<float> cond(conditioning.begin(), conditioning.end());
    return [&net, cond = std::move(cond), n_lat, n_lon](std::span<const double> state, double tau) {
        std::vector<float> x(state.begin(), state.end());
        const auto y = forward<float>(net, x, cond, n_lat, n_lon, tau);
        return std::vector<double>(y.begin(), y.end());
    };
}

namespace {

void require_finite_state(std::span<const double> state, std::size_t step, std::size_t total) {
    for (double v : state) {
        if (!std::isfinite(v)) {
            throw NumericalError("sampler: state became non-finite at step " + std::to_string(step) + " of " +
                                 std::to_string(total));
        }
    }
}

}  // namespace

std::vector<double> integrate_from(std::vector<double> state, const VelocityFn& velocity, const FMConfig& cfg) {
    cfg.validate();
    const std::size_t N = cfg.n_sample_steps;
    const double h = 1.0 / static_cast<double>(N);
    for (std::size_t s = 0; s < N; ++s) {
        const double tau = static_cast<double>(s) * h;
        const auto v0 = velocity(state, tau);
        if (v0.size() != state.size()) throw ValidationError("sampler: velocity has the wrong size");
        if (cfg.integrator == Integrator::euler) {
            for (std::size_t i = 0; i < state.size(); ++i) state[i] += h * v0[i];
        } else {
            std::vector<double> pred(state);
            for (std::size_t i = 0; i < state.size(); ++i) pred[i] += h * v0[i];
            const auto v1 = velocity(pred, tau + h);
            for (std::size_t i = 0; i < state.size(); ++i) state[i] += 0.5 * h * (v0[i] + v1[i]);
        }
        require_finite_state(state, s + 1, N);
    }
    return state;
}

Field sample_residual(const VelocityFn& velocity, const Field& like, const FMConfig& cfg, Rng& rng) {
    std::vector<double> eps(like.values().size());
    for (double& e : eps) e = rng.normal();
    return like.with_values(integrate_from(std::move(eps), velocity, cfg));
}

Field sample_residual(const VelocityNet<float>& net, const Field& conditioning, const FMConfig& cfg, Rng& rng) {
    const auto& a = net.arch();
    if (a.n_channels != conditioning.n_channels() || a.n_cond != conditioning.n_channels()) {
        throw ValidationError("sample_residual: network expects " + std::to_string(a.n_channels) + "+" +
                              std::to_string(a.n_cond) + " channels, conditioning has " +
                              std::to_string(conditioning.n_channels()));
    }
    auto v = net_velocity(net, conditioning.values(), conditioning.n_lat(), conditioning.n_lon());
    return sample_residual(v, conditioning, cfg, rng);
}

}  // namespace fmsr
