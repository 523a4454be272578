#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fmsr {

/// Equiangular, cell-centered latitude-longitude grid covering the sphere.
///
/// Rows run south to north, columns east from 0 degrees. There are no pole
/// points: the first and last rows are centered half a spacing away from the
/// poles. Row weights are proportional to the exact spherical band area
/// sin(lat_north) - sin(lat_south) and normalized so that
/// sum_j n_lon * area_weight[j] == 1.
class GridSpec {
public:
    std::size_t n_lat() const { return n_lat_; }
    std::size_t n_lon() const { return n_lon_; }
    std::size_t size() const { return n_lat_ * n_lon_; }

    double lat_spacing() const { return 180.0 / static_cast<double>(n_lat_); }
    double lon_spacing() const { return 360.0 / static_cast<double>(n_lon_); }

    const std::vector<double>& lat_centers() const { return lat_centers_; }
    const std::vector<double>& lon_centers() const { return lon_centers_; }
    const std::vector<double>& area_weight() const { return area_weight_; }

    std::string describe() const;

    bool operator==(const GridSpec& other) const {
        return n_lat_ == other.n_lat_ && n_lon_ == other.n_lon_;
    }

private:
    friend GridSpec make_grid(std::size_t n_lat, std::size_t n_lon);
    GridSpec() = default;

    std::size_t n_lat_ = 0;
    std::size_t n_lon_ = 0;
    std::vector<double> lat_centers_;
    std::vector<double> lon_centers_;
    std::vector<double> area_weight_;
};

using GridPtr = std::shared_ptr<const GridSpec>;

/// Requires n_lat >= 2 and even, n_lon >= 4. Throws ValidationError otherwise.
GridSpec make_grid(std::size_t n_lat, std::size_t n_lon);
GridPtr make_grid_ptr(std::size_t n_lat, std::size_t n_lon);

/// One (variable, level) entry. An empty level means a surface variable.
struct Channel {
    std::string variable;
    std::optional<int> level_hpa;

    bool is_surface() const { return !level_hpa.has_value(); }
    /// "t850" for upper-air, the bare variable name for surface fields.
    std::string name() const;
    bool operator==(const Channel&) const = default;
};

/// Pressure-level loss coefficient proportional to air density (~pressure),
/// normalized by the mean of the 13 standard levels 50..1000 hPa. Surface
/// channels get 1.
double level_weight_for(const Channel& channel);

/// Ordered set of channels. Construction puts entries in canonical order:
/// surface variables first (by name), then upper-air by (variable, ascending
/// pressure).
class ChannelCatalog {
public:
    explicit ChannelCatalog(std::vector<Channel> entries);

    std::size_t size() const { return entries_.size(); }
    const std::vector<Channel>& entries() const { return entries_; }
    const Channel& operator[](std::size_t i) const { return entries_[i]; }

    double level_weight(std::size_t i) const { return level_weight_[i]; }
    double variable_weight(std::size_t) const { return 1.0; }

    std::vector<std::string> names() const;
    /// Index of a channel by name(); throws ValidationError when absent.
    std::size_t index_of(const std::string& name) const;
    std::optional<std::size_t> find(const std::string& name) const;

    /// SHA-256 over the canonical "variable:level;" listing.
    const std::string& hash() const { return hash_; }

    bool operator==(const ChannelCatalog& other) const { return entries_ == other.entries_; }

private:
    std::vector<Channel> entries_;
    std::vector<double> level_weight_;
    std::string hash_;
};

using CatalogPtr = std::shared_ptr<const ChannelCatalog>;

/// Channel-stacked field, layout [channel][lat][lon], row-major.
///
/// Values are held in double precision; files store them as float32.
class Field {
public:
    Field() = default;
    Field(GridPtr grid, CatalogPtr catalog, std::vector<double> values,
          std::optional<std::int64_t> timestamp = std::nullopt);

    static Field zeros(GridPtr grid, CatalogPtr catalog,
                       std::optional<std::int64_t> timestamp = std::nullopt);
    static Field zeros_like(const Field& other);

    const GridSpec& grid() const { return *grid_; }
    const GridPtr& grid_ptr() const { return grid_; }
    const ChannelCatalog& catalog() const { return *catalog_; }
    const CatalogPtr& catalog_ptr() const { return catalog_; }

    std::size_t n_channels() const { return catalog_->size(); }
    std::size_t n_lat() const { return grid_->n_lat(); }
    std::size_t n_lon() const { return grid_->n_lon(); }
    std::size_t plane_size() const { return grid_->size(); }

    std::span<const double> values() const { return values_; }
    std::span<double> values() { return values_; }
    std::span<const double> channel(std::size_t c) const {
        return std::span<const double>(values_).subspan(c * plane_size(), plane_size());
    }
    std::span<double> channel(std::size_t c) {
        return std::span<double>(values_).subspan(c * plane_size(), plane_size());
    }
    double at(std::size_t c, std::size_t j, std::size_t k) const {
        return values_[(c * n_lat() + j) * n_lon() + k];
    }
    double& at(std::size_t c, std::size_t j, std::size_t k) {
        return values_[(c * n_lat() + j) * n_lon() + k];
    }

    const std::optional<std::int64_t>& timestamp() const { return timestamp_; }
    void set_timestamp(std::optional<std::int64_t> t) { timestamp_ = t; }

    /// Copy of this field's layout and timestamp with new values.
    Field with_values(std::vector<double> values) const;

    bool same_layout(const Field& other) const;
    bool all_finite() const;

    bool empty() const { return !grid_; }

private:
    GridPtr grid_;
    CatalogPtr catalog_;
    std::vector<double> values_;
    std::optional<std::int64_t> timestamp_;
};

/// Throws ValidationError naming `what` if the layouts differ.
void require_same_layout(const Field& a, const Field& b, const char* what);
/// Throws NumericalError naming `what` if any value is not finite.
void require_finite(const Field& f, const char* what);

/// Lead-time indexed forecast. States hold lead 1..T (or analysis states).
struct Trajectory {
    std::int64_t init_time = 0;
    int lead_step_hours = 24;
    std::vector<Field> states;

    std::size_t length() const { return states.size(); }
    /// Checks T >= 1 and a shared grid/catalog.
    void validate() const;
};

/// Member-indexed trajectories from one initialization.
struct EnsembleSet {
    std::vector<Trajectory> members;

    std::size_t size() const { return members.size(); }
    std::size_t n_leads() const { return members.empty() ? 0 : members.front().length(); }
    /// Checks M >= 1 and shared init time, length, grid and catalog.
    void validate() const;
};

/// Area-weighted mean per channel, accumulated in double.
std::vector<double> weighted_mean(const Field& f);

/// Area-weighted mean of one [lat][lon] plane.
double weighted_plane_mean(const GridSpec& grid, std::span<const double> plane);

}  // namespace fmsr
