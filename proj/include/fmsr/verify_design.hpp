#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fmsr/grid.hpp"
#include "fmsr/synth.hpp"

namespace fmsr {

/// Area-weighted Pearson correlation per channel, spatial means removed.
/// Throws NumericalError when either field has zero spatial variance.
std::vector<double> pattern_correlation(const Field& a, const Field& b);

/// Mean over the sequence of the area-weighted spatial variance of
/// (field - climatology), per channel. The climatology is looked up by each
/// field's timestamp.
std::vector<double> activity(std::span<const Field> fields, const Climatology& clim, int step_hours = 24);

/// activity(sr_recoarsened) / activity(lr), per channel.
std::vector<double> activity_ratio(std::span<const Field> sr_recoarsened, std::span<const Field> lr,
                                   const Climatology& clim, int step_hours = 24);

/// sqrt(mean over the sequence of area-weighted MSE) / sigma_clim, per channel.
std::vector<double> nrmse(std::span<const Field> sr_recoarsened, std::span<const Field> lr,
                          std::span<const double> sigma_clim);

struct DesignRow {
    std::string channel;
    int lead_h = 0;
    double corr = 0.0;  // mean over the sequence
    double activity_ratio = 0.0;
    double nrmse = 0.0;
};

struct DesignReport {
    std::size_t n_samples = 0;
    std::vector<DesignRow> rows;
};

/// One report block for a single lead: sr_recoarsened[t] vs lr[t].
std::vector<DesignRow> design_rows(std::span<const Field> sr_recoarsened, std::span<const Field> lr,
                                   const Climatology& clim, int lead_h, int step_hours = 24);

/// CSV columns: channel,lead_h,corr,activity_ratio,nrmse.
void write_design_csv(const std::filesystem::path& path, const DesignReport& report);

}  // namespace fmsr
