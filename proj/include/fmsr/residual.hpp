#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fmsr/grid.hpp"
#include "fmsr/regrid.hpp"

namespace fmsr {

/// hr = upsampled + residual, with upsampled = interpolate_up(lr).
struct Decomposition {
    Field upsampled;
    Field residual;
};

Decomposition decompose(const Field& hr, const Field& lr, const RegridPlan& plan_up);

/// Per-channel normalization statistics for interpolated inputs (x) and
/// residuals (r). Population (divide-by-n) standard deviations over all
/// pixels and samples, without latitude weighting.
struct NormStats {
    std::vector<std::string> channels;
    std::string catalog_hash;
    std::vector<double> mu_x, sigma_x;
    std::vector<double> mu_r, sigma_r;
    std::uint64_t count = 0;  // number of samples

    nlohmann::json to_json() const;
    static NormStats from_json(const nlohmann::json& j);
    /// SHA-256 of the canonical JSON dump; recorded in checkpoints.
    std::string hash() const;
};

enum class NormKind { input, residual };

/// Mergeable per-channel accumulator. Shards can be accumulated separately
/// and merged in a fixed order.
class NormAccumulator {
public:
    void add(const Decomposition& sample);
    void merge(const NormAccumulator& other);
    /// Throws ValidationError for fewer than 2 samples or a zero-variance channel.
    NormStats finish() const;

private:
    struct Moments {
        double n = 0.0;
        double mean = 0.0;
        double m2 = 0.0;
        void add(std::span<const double> values);
        void merge(const Moments& other);
    };
    CatalogPtr catalog_;
    std::uint64_t samples_ = 0;
    std::vector<Moments> x_, r_;
};

NormStats fit_norm_stats(std::span<const Decomposition> samples);

/// Elementwise (v - mu) / sigma with the statistics selected by `kind`.
Field normalize(const Field& f, const NormStats& stats, NormKind kind);
/// Exact inverse of normalize up to rounding.
Field denormalize(const Field& f, const NormStats& stats, NormKind kind);

/// Normalized training record on the fine grid.
struct ResidualSample {
    Field conditioning;  // normalized interpolated coarse state
    Field target;        // normalized residual
    std::optional<std::int64_t> time;
};

ResidualSample make_residual_sample(const Decomposition& d, const NormStats& stats);

}  // namespace fmsr
