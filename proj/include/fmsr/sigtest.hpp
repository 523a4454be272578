#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fmsr/rng.hpp"

namespace fmsr {

/// Per-date score differences d_t = score_A - score_B for one
/// (metric, channel, lead).
struct PairedSeries {
    std::string metric;
    std::string channel;
    int lead_h = 0;
    std::vector<double> diffs;

    /// Requires >= 8 finite values.
    void validate() const;
};

struct BootstrapResult {
    double estimate = 0.0;  // mean difference
    double block_length = 1.0;
    double level = 0.95;
    double lo = 0.0, hi = 0.0;
    std::size_t n_resamples = 0;
    /// Every resample gave the same mean; lo == hi == estimate.
    bool degenerate = false;
    /// The interval excludes zero.
    bool significant = false;
};

/// Politis-White automatic expected block length for the stationary
/// bootstrap (with the Patton-Politis-White correction), clamped to
/// [1, n/3]. Constant series give 1.
double auto_block_length(std::span<const double> series);

/// Index path of one stationary-bootstrap resample: uniform starts, blocks
/// continue with probability 1 - 1/mean_block_len, wrapping circularly.
std::vector<std::size_t> stationary_bootstrap_indices(std::size_t n, double mean_block_len, Rng& rng);
std::vector<double> stationary_bootstrap_resample(std::span<const double> series, double mean_block_len, Rng& rng);

/// Jackknife acceleration of the mean.
double jackknife_acceleration(std::span<const double> series);

/// Percentile interval of bootstrap replicates at `level`.
std::pair<double, double> percentile_interval(std::vector<double> replicates, double level);
/// BCa interval from replicates, the point estimate and acceleration.
std::pair<double, double> bca_endpoints(std::vector<double> replicates, double estimate, double acceleration,
                                        double level);

/// Stationary-bootstrap BCa interval for the mean. Resample b draws from
/// Rng::keyed(seed, {b}). Block length defaults to auto_block_length.
BootstrapResult bca_interval(std::span<const double> series, std::uint64_t seed, std::size_t n_resamples = 4000,
                             double level = 0.95, std::optional<double> block_length = std::nullopt);

/// Per-date scores: columns metric,channel,lead_h,init_time,value.
struct ScoreRow {
    std::string metric;
    std::string channel;
    int lead_h = 0;
    std::int64_t init_time = 0;
    double value = 0.0;
};
void write_score_csv(const std::filesystem::path& path, std::span<const ScoreRow> rows);
std::vector<ScoreRow> read_score_csv(const std::filesystem::path& path);

/// Pairs A and B on (metric, channel, lead_h, init_time); one series per
/// (metric, channel, lead_h), dates ascending. Throws if a date is unmatched.
std::vector<PairedSeries> pair_scores(std::span<const ScoreRow> a, std::span<const ScoreRow> b);

struct SigRow {
    PairedSeries series;
    BootstrapResult result;
};
/// CSV columns: metric,channel,lead_h,estimate,lo,hi,block_len,significant.
void write_sigtest_csv(const std::filesystem::path& path, std::span<const SigRow> rows);

}  // namespace fmsr
