#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "fmsr/diffnet.hpp"
#include "fmsr/flow_match.hpp"
#include "fmsr/grid.hpp"
#include "fmsr/regrid.hpp"
#include "fmsr/residual.hpp"
#include "fmsr/rng.hpp"
#include "fmsr/synth.hpp"

namespace fmsr {

/// Trained super-resolution operator: network, normalization statistics and
/// the coarse<->fine regridding plans used in training.
struct SROperator {
    VelocityNet<float> net;
    NormStats stats;
    RegridPlan up;    // coarse -> fine, bicubic
    RegridPlan down;  // fine -> coarse, conservative
    FMConfig cfg;
};

/// Builds the plans and checks that network, statistics and catalog agree.
/// `net_catalog_hash` is the hash recorded with the checkpoint; an empty
/// string skips that comparison.
SROperator make_sr_operator(VelocityNet<float> net, NormStats stats, GridPtr coarse, GridPtr fine, FMConfig cfg,
                            const std::string& net_catalog_hash = "");

/// upsampled + denormalize(normalized_residual).
Field assemble_hr(const SROperator& op, const Field& upsampled, const Field& normalized_residual);

/// One stochastic high-resolution reconstruction of a coarse state.
Field super_resolve_state(const SROperator& op, const Field& lr, Rng& rng);

/// SR of every lead independently. The stream for a state is keyed by
/// (seed, member, valid time), falling back to the lead index for states
/// without a timestamp.
Trajectory super_resolve_trajectory(const SROperator& op, const Trajectory& traj, std::uint64_t seed,
                                    std::uint64_t member = 0);
EnsembleSet super_resolve_ensemble(const SROperator& op, const EnsembleSet& ens, std::uint64_t seed);

using ForecastStep = std::function<Field(const Field&)>;

/// forecast_step(coarsen(super_resolve_state(lr_state))).
Field pipeline_integrated_step(const SROperator& op, const Field& lr_state, const ForecastStep& forecast_step,
                               Rng& rng);

/// K-step rollout of the toy emulator with SR reinjected before every step.
/// Emulator noise uses the same keys as emulate_forecast, so rollouts pair
/// with the post-processing ensemble member by member.
EnsembleSet integrated_forecast(const SROperator& op, const Field& initial, const ToyForecastModel& model,
                                std::size_t K, std::size_t M, std::uint64_t seed);

/// Coarsens a foreign high-resolution trajectory with the training plan and
/// super-resolves it.
Trajectory zero_shot_apply(const SROperator& op, const Trajectory& foreign_hr, std::uint64_t seed,
                           std::uint64_t member = 0);

}  // namespace fmsr
