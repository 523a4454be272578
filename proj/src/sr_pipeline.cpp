#include "fmsr/sr_pipeline.hpp"

#include "fmsr/errors.hpp"
#include "fmsr/parallel.hpp"

namespace fmsr {
namespace {

Rng state_stream(std::uint64_t seed, std::uint64_t member, const Field& f, std::size_t lead) {
    // Timestamps are hours and may be negative; the cast keeps them distinct.
    const std::uint64_t key = f.timestamp() ? static_cast<std::uint64_t>(*f.timestamp()) : lead;
    return Rng::keyed(seed, {member, f.timestamp() ? 1u : 0u, key});
}

}  // namespace

SROperator make_sr_operator(VelocityNet<float> net, NormStats stats, GridPtr coarse, GridPtr fine, FMConfig cfg,
                            const std::string& net_catalog_hash) {
    cfg.validate();
    const std::size_t C = stats.channels.size();
    const auto& a = net.arch();
    if (a.n_channels != C || a.n_cond != C) {
        throw ValidationError("sr operator: network has " + std::to_string(a.n_channels) + " residual and " +
                              std::to_string(a.n_cond) + " conditioning channels, statistics have " +
                              std::to_string(C));
    }
    if (!net_catalog_hash.empty() && net_catalog_hash != stats.catalog_hash) {
        throw ValidationError("sr operator: checkpoint catalog hash " + net_catalog_hash +
                              " does not match the normalization statistics (" + stats.catalog_hash + ")");
    }
    RegridPlan up = RegridPlan::bicubic(coarse, fine);
    RegridPlan down = RegridPlan::conservative(fine, coarse);
    return SROperator{std::move(net), std::move(stats), std::move(up), std::move(down), cfg};
}

Field assemble_hr(const SROperator& op, const Field& upsampled, const Field& normalized_residual) {
    require_same_layout(upsampled, normalized_residual, "assemble_hr");
    Field hr = denormalize(normalized_residual, op.stats, NormKind::residual);
    auto out = hr.values();
    const auto up = upsampled.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += up[i];
    hr.set_timestamp(upsampled.timestamp());
    return hr;
}

Field super_resolve_state(const SROperator& op, const Field& lr, Rng& rng) {
    if (!(lr.grid() == op.up.src())) {
        throw ValidationError("super_resolve_state: input is on " + lr.grid().describe() + ", operator expects " +
                              op.up.src().describe());
    }
    if (lr.catalog().hash() != op.stats.catalog_hash) {
        throw ValidationError("super_resolve_state: input channel catalog does not match the operator");
    }
    const Field up = interpolate_up(lr, op.up);
    const Field cond = normalize(up, op.stats, NormKind::input);
    const Field r = sample_residual(op.net, cond, op.cfg, rng);
    Field hr = assemble_hr(op, up, r);
    hr.set_timestamp(lr.timestamp());
    require_finite(hr, "super_resolve_state output");
    return hr;
}

Trajectory super_resolve_trajectory(const SROperator& op, const Trajectory& traj, std::uint64_t seed,
                                    std::uint64_t member) {
    traj.validate();
    Trajectory out{traj.init_time, traj.lead_step_hours, std::vector<Field>(traj.length())};
    parallel_for(traj.length(), [&](std::size_t l) {
        Rng rng = state_stream(seed, member, traj.states[l], l);
        out.states[l] = super_resolve_state(op, traj.states[l], rng);
    });
    return out;
}

EnsembleSet super_resolve_ensemble(const SROperator& op, const EnsembleSet& ens, std::uint64_t seed) {
    ens.validate();
    const std::size_t M = ens.size(), L = ens.n_leads();
    EnsembleSet out;
    for (const auto& m : ens.members) out.members.push_back({m.init_time, m.lead_step_hours, std::vector<Field>(L)});
    parallel_for(M * L, [&](std::size_t idx) {
        const std::size_t m = idx / L, l = idx % L;
        const Field& lr = ens.members[m].states[l];
        Rng rng = state_stream(seed, m, lr, l);
        out.members[m].states[l] = super_resolve_state(op, lr, rng);
    });
    return out;
}

Field pipeline_integrated_step(const SROperator& op, const Field& lr_state, const ForecastStep& forecast_step,
                               Rng& rng) {
    const Field hr = super_resolve_state(op, lr_state, rng);
    return forecast_step(coarsen(hr, op.down));
}

EnsembleSet integrated_forecast(const SROperator& op, const Field& initial, const ToyForecastModel& model,
                                std::size_t K, std::size_t M, std::uint64_t seed) {
    model.validate(initial);
    if (K < 1 || M < 1) throw ValidationError("integrated_forecast: K and M must be >= 1");
    const std::int64_t init = initial.timestamp().value_or(0);
    EnsembleSet set;
    set.members.resize(M);
    parallel_for(M, [&](std::size_t m) {
        Trajectory& tr = set.members[m];
        tr.init_time = init;
        tr.lead_step_hours = 24;
        Field state = initial;
        for (std::size_t l = 1; l <= K; ++l) {
            Rng sr_rng = state_stream(seed, m, state, l - 1);
            Rng step_rng = Rng::keyed(model.seed, {static_cast<std::uint64_t>(init), m, l});
            state = pipeline_integrated_step(op, state, [&](const Field& x) { return model.step(x, step_rng); },
                                             sr_rng);
            state.set_timestamp(init + static_cast<std::int64_t>(l) * tr.lead_step_hours);
            tr.states.push_back(state);
        }
    });
    return set;
}

Trajectory zero_shot_apply(const SROperator& op, const Trajectory& foreign_hr, std::uint64_t seed,
                           std::uint64_t member) {
    foreign_hr.validate();
    Trajectory lr{foreign_hr.init_time, foreign_hr.lead_step_hours, {}};
    for (const auto& s : foreign_hr.states) {
        if (!(s.grid() == op.down.src())) {
            throw ValidationError("zero_shot_apply: foreign state is on " + s.grid().describe() +
                                  ", operator expects " + op.down.src().describe());
        }
        Field c = coarsen(s, op.down);
        c.set_timestamp(s.timestamp());
        lr.states.push_back(std::move(c));
    }
    return super_resolve_trajectory(op, lr, seed, member);
}

}  // namespace fmsr
