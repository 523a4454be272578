#include "fmsr/regrid.hpp"

#include <algorithm>
#include <cmath>

#include "fmsr/errors.hpp"

namespace fmsr {

namespace {

std::size_t exact_ratio(std::size_t big, std::size_t small, const char* axis) {
    if (small == 0 || big % small != 0) {
        throw ValidationError(std::string("RegridPlan: grids do not nest along ") + axis + " (" +
                              std::to_string(big) + " vs " + std::to_string(small) + ")");
    }
    return big / small;
}

// Fine cell i of a coarse axis with `factor` children per cell sits at
// coarse-index position (i + 0.5) / factor - 0.5.
double fine_position(std::size_t i, std::size_t factor) {
    return (2.0 * static_cast<double>(i) + 1.0 - static_cast<double>(factor)) /
           (2.0 * static_cast<double>(factor));
}

}  // namespace

std::array<double, 4> catmull_rom_weights(double t) {
    const double t2 = t * t;
    const double t3 = t2 * t;
    return {-0.5 * t3 + t2 - 0.5 * t,
            1.5 * t3 - 2.5 * t2 + 1.0,
            -1.5 * t3 + 2.0 * t2 + 0.5 * t,
            0.5 * t3 - 0.5 * t2};
}

RegridPlan RegridPlan::conservative(GridPtr fine, GridPtr coarse) {
    RegridPlan p;
    p.mode_ = RegridMode::conservative_coarsen;
    p.factor_lat_ = exact_ratio(fine->n_lat(), coarse->n_lat(), "latitude");
    p.factor_lon_ = exact_ratio(fine->n_lon(), coarse->n_lon(), "longitude");
    p.src_ = std::move(fine);
    p.dst_ = std::move(coarse);
    const auto& w = p.src_->area_weight();
    p.row_fraction_.resize(p.src_->n_lat());
    for (std::size_t J = 0; J < p.dst_->n_lat(); ++J) {
        double band = 0.0;
        for (std::size_t r = 0; r < p.factor_lat_; ++r) band += w[J * p.factor_lat_ + r];
        for (std::size_t r = 0; r < p.factor_lat_; ++r) {
            p.row_fraction_[J * p.factor_lat_ + r] = w[J * p.factor_lat_ + r] / band;
        }
    }
    return p;
}

RegridPlan RegridPlan::bicubic(GridPtr coarse, GridPtr fine) {
    RegridPlan p;
    p.mode_ = RegridMode::bicubic_up;
    p.factor_lat_ = exact_ratio(fine->n_lat(), coarse->n_lat(), "latitude");
    p.factor_lon_ = exact_ratio(fine->n_lon(), coarse->n_lon(), "longitude");
    p.src_ = std::move(coarse);
    p.dst_ = std::move(fine);

    const auto n_lat = static_cast<std::ptrdiff_t>(p.src_->n_lat());
    p.lat_taps_.resize(p.dst_->n_lat());
    for (std::size_t i = 0; i < p.dst_->n_lat(); ++i) {
        const double u = fine_position(i, p.factor_lat_);
        const double base = std::floor(u);
        Taps taps{};
        taps.weight = catmull_rom_weights(u - base);
        for (int o = 0; o < 4; ++o) {
            auto idx = static_cast<std::ptrdiff_t>(base) - 1 + o;
            idx = std::clamp<std::ptrdiff_t>(idx, 0, n_lat - 1);
            taps.index[o] = static_cast<std::size_t>(idx);
        }
        p.lat_taps_[i] = taps;
    }

    const auto n_lon = static_cast<std::ptrdiff_t>(p.src_->n_lon());
    p.lon_taps_.resize(p.dst_->n_lon());
    for (std::size_t i = 0; i < p.dst_->n_lon(); ++i) {
        const double u = fine_position(i, p.factor_lon_);
        const double base = std::floor(u);
        Taps taps{};
        taps.weight = catmull_rom_weights(u - base);
        for (int o = 0; o < 4; ++o) {
            auto idx = (static_cast<std::ptrdiff_t>(base) - 1 + o) % n_lon;
            if (idx < 0) idx += n_lon;
            taps.index[o] = static_cast<std::size_t>(idx);
        }
        p.lon_taps_[i] = taps;
    }
    return p;
}

void RegridPlan::apply_plane(std::span<const double> in, std::span<double> out) const {
    const std::size_t src_lon = src_->n_lon();
    const std::size_t dst_lat = dst_->n_lat();
    const std::size_t dst_lon = dst_->n_lon();
    if (mode_ == RegridMode::conservative_coarsen) {
        const double inv_lon = 1.0 / static_cast<double>(factor_lon_);
        for (std::size_t J = 0; J < dst_lat; ++J) {
            for (std::size_t K = 0; K < dst_lon; ++K) {
                double acc = 0.0;
                for (std::size_t r = 0; r < factor_lat_; ++r) {
                    const std::size_t j = J * factor_lat_ + r;
                    const double* row = in.data() + j * src_lon + K * factor_lon_;
                    double s = 0.0;
                    for (std::size_t q = 0; q < factor_lon_; ++q) s += row[q];
                    acc += row_fraction_[j] * s;
                }
                out[J * dst_lon + K] = acc * inv_lon;
            }
        }
        return;
    }
    // Separable: interpolate along longitude for the source rows, then latitude.
    const std::size_t src_lat = src_->n_lat();
    std::vector<double> stage(src_lat * dst_lon);
    for (std::size_t j = 0; j < src_lat; ++j) {
        const double* row = in.data() + j * src_lon;
        for (std::size_t k = 0; k < dst_lon; ++k) {
            const Taps& t = lon_taps_[k];
            stage[j * dst_lon + k] = t.weight[0] * row[t.index[0]] + t.weight[1] * row[t.index[1]] +
                                     t.weight[2] * row[t.index[2]] + t.weight[3] * row[t.index[3]];
        }
    }
    for (std::size_t i = 0; i < dst_lat; ++i) {
        const Taps& t = lat_taps_[i];
        const double* r0 = stage.data() + t.index[0] * dst_lon;
        const double* r1 = stage.data() + t.index[1] * dst_lon;
        const double* r2 = stage.data() + t.index[2] * dst_lon;
        const double* r3 = stage.data() + t.index[3] * dst_lon;
        double* o = out.data() + i * dst_lon;
        for (std::size_t k = 0; k < dst_lon; ++k) {
            o[k] = t.weight[0] * r0[k] + t.weight[1] * r1[k] + t.weight[2] * r2[k] + t.weight[3] * r3[k];
        }
    }
}

namespace {

Field apply(const Field& f, const RegridPlan& plan, RegridMode expected, const char* what) {
    if (plan.mode() != expected) throw ValidationError(std::string(what) + ": plan has the wrong mode");
    if (!(f.grid() == plan.src())) {
        throw ValidationError(std::string(what) + ": field grid " + f.grid().describe() +
                              " does not match plan source " + plan.src().describe());
    }
    Field out = Field::zeros(plan.dst_ptr(), f.catalog_ptr(), f.timestamp());
    for (std::size_t c = 0; c < f.n_channels(); ++c) plan.apply_plane(f.channel(c), out.channel(c));
    return out;
}

}  // namespace

Field coarsen(const Field& f, const RegridPlan& plan) {
    return apply(f, plan, RegridMode::conservative_coarsen, "coarsen");
}

Field interpolate_up(const Field& f, const RegridPlan& plan) {
    return apply(f, plan, RegridMode::bicubic_up, "interpolate_up");
}

Field recoarsen_for_validation(const Field& hr, const RegridPlan& plan) { return coarsen(hr, plan); }

}  // namespace fmsr
