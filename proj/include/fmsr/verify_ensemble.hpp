#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fmsr/grid.hpp"
#include "fmsr/synth.hpp"

namespace fmsr {

// Every estimator takes one ensemble per initialization and the matching
// truth trajectory (truth[t].states[l] verifies lead l of forecasts[t]) and
// averages over initializations. Per-channel results are [channel][lead].
using LeadTable = std::vector<std::vector<double>>;

/// Signed fair estimate of the ensemble-mean squared error (may be negative
/// for a sharp, well-centred ensemble).
LeadTable fair_ens_mean_mse(std::span<const EnsembleSet> forecasts, std::span<const Trajectory> truth);
/// sqrt of fair_ens_mean_mse; negative estimates are reported as 0.
LeadTable fair_ens_mean_rmse(std::span<const EnsembleSet> forecasts, std::span<const Trajectory> truth);
/// Plain (not bias-corrected) ensemble-mean RMSE.
LeadTable ens_mean_rmse(std::span<const EnsembleSet> forecasts, std::span<const Trajectory> truth);

/// Fair CRPS of one scalar ensemble; O(M log M) through order statistics.
double fair_crps_scalar(std::span<const double> members, double truth);
LeadTable fair_crps(std::span<const EnsembleSet> forecasts, std::span<const Trajectory> truth);

/// Fair energy score of ensemble vectors against a truth vector (Euclidean norm).
double fair_energy_score_vec(std::span<const std::vector<double>> members, std::span<const double> truth);
/// Per lead. The norm runs over the channel-stacked field with each value
/// scaled by sqrt(area weight * level weight * variable weight).
std::vector<double> energy_score(std::span<const EnsembleSet> forecasts, std::span<const Trajectory> truth);

/// Fair Brier score for exceeding per-pixel thresholds.
LeadTable fair_brier_at(std::span<const EnsembleSet> forecasts, std::span<const Trajectory> truth,
                        const Field& threshold);
/// Mean of fair_brier_at for the climatological q and 1 - q quantiles.
LeadTable fair_brier(std::span<const EnsembleSet> forecasts, std::span<const Trajectory> truth,
                     const Climatology& clim, double q);

/// Area-weighted ensemble spread from the unbiased member variance.
LeadTable ensemble_spread(std::span<const EnsembleSet> forecasts, std::span<const Trajectory> truth);
/// sqrt((M + 1) / M) * spread / ens_mean_rmse.
LeadTable spread_skill_ratio(std::span<const EnsembleSet> forecasts, std::span<const Trajectory> truth);

/// 1 - model / reference. Requires reference > 0.
double skill_score(double model, double reference);

struct MetricRow {
    std::string metric;
    std::string channel;  // empty for multivariate metrics
    int lead_h = 0;
    std::optional<double> q;
    double value = 0.0;
};

struct MetricReport {
    std::size_t n_members = 0;
    std::size_t n_inits = 0;
    std::vector<MetricRow> rows;

    const MetricRow* find(const std::string& metric, const std::string& channel, int lead_h,
                          std::optional<double> q = std::nullopt) const;
};

/// Brier levels are given as the lower member of each (q, 1 - q) pair.
MetricReport evaluate_ensembles(std::span<const EnsembleSet> forecasts, std::span<const Trajectory> truth,
                                const Climatology& clim, const std::vector<double>& brier_levels = {0.01, 0.05, 0.10});

/// Skill of `model` against `reference` for every row both reports share,
/// metric names suffixed "_ss". SSR rows are skipped.
MetricReport skill_report(const MetricReport& model, const MetricReport& reference);

/// Unweighted mean skill per lead over the rows of `skill` whose metric
/// matches and whose channel is in `channels` (all channels when empty).
std::vector<std::pair<int, double>> average_skill(const MetricReport& skill, const std::string& metric,
                                                  const std::vector<std::string>& channels = {});

/// CSV columns: metric,channel,lead_h,q,value (q empty when not applicable).
void write_metric_csv(const std::filesystem::path& path, const MetricReport& report);
MetricReport read_metric_csv(const std::filesystem::path& path);

}  // namespace fmsr
