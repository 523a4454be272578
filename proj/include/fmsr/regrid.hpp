#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "fmsr/grid.hpp"

namespace fmsr {

enum class RegridMode { conservative_coarsen, bicubic_up };

/// Catmull-Rom (a = -0.5) weights for the four taps at offsets -1, 0, 1, 2
/// around a sample at fractional position t in [0, 1).
std::array<double, 4> catmull_rom_weights(double t);

/// Precomputed regridding between two integer-nested grids.
///
/// Conservative plans average factor_lat x factor_lon fine cells with exact
/// spherical-band area weights. Bicubic plans evaluate a Catmull-Rom kernel
/// at every fine cell center: longitude taps wrap periodically, latitude taps
/// clamp to the first and last rows.
class RegridPlan {
public:
    static RegridPlan conservative(GridPtr fine, GridPtr coarse);
    static RegridPlan bicubic(GridPtr coarse, GridPtr fine);

    RegridMode mode() const { return mode_; }
    const GridSpec& src() const { return *src_; }
    const GridSpec& dst() const { return *dst_; }
    const GridPtr& src_ptr() const { return src_; }
    const GridPtr& dst_ptr() const { return dst_; }
    std::size_t factor_lat() const { return factor_lat_; }
    std::size_t factor_lon() const { return factor_lon_; }

    /// Applies the plan to one [lat][lon] plane.
    void apply_plane(std::span<const double> in, std::span<double> out) const;

private:
    struct Taps {
        std::array<std::size_t, 4> index;
        std::array<double, 4> weight;
    };

    RegridPlan() = default;

    RegridMode mode_ = RegridMode::conservative_coarsen;
    GridPtr src_;
    GridPtr dst_;
    std::size_t factor_lat_ = 1;
    std::size_t factor_lon_ = 1;
    // Conservative: fraction of each fine row within its coarse row.
    std::vector<double> row_fraction_;
    // Bicubic: taps per destination row and per destination column.
    std::vector<Taps> lat_taps_;
    std::vector<Taps> lon_taps_;
};

/// First-order conservative coarse-graining. Preserves the area-weighted mean
/// of every channel.
Field coarsen(const Field& f, const RegridPlan& plan);

/// Bicubic (Catmull-Rom) upsampling to the plan's fine grid.
Field interpolate_up(const Field& f, const RegridPlan& plan);

/// Re-coarsening used for design validation. Uses the training-time
/// conservative plan, so outputs are bit-identical to coarsen().
Field recoarsen_for_validation(const Field& hr, const RegridPlan& plan);

}  // namespace fmsr
