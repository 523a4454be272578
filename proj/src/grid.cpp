#include "fmsr/grid.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include "fmsr/errors.hpp"
#include "fmsr/hash.hpp"

namespace fmsr {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

// Mean of the 50..1000 hPa standard pressure levels.
constexpr double kMeanStandardLevel =
    (50.0 + 100 + 150 + 200 + 250 + 300 + 400 + 500 + 600 + 700 + 850 + 925 + 1000) / 13.0;

}  // namespace

std::string GridSpec::describe() const {
    std::ostringstream os;
    os << n_lat_ << "x" << n_lon_;
    return os.str();
}

GridSpec make_grid(std::size_t n_lat, std::size_t n_lon) {
    if (n_lat < 2 || n_lat % 2 != 0) {
        throw ValidationError("make_grid: n_lat must be even and >= 2, got " + std::to_string(n_lat));
    }
    if (n_lon < 4) {
        throw ValidationError("make_grid: n_lon must be >= 4, got " + std::to_string(n_lon));
    }
    GridSpec g;
    g.n_lat_ = n_lat;
    g.n_lon_ = n_lon;
    const double dlat = 180.0 / static_cast<double>(n_lat);
    const double dlon = 360.0 / static_cast<double>(n_lon);
    g.lat_centers_.resize(n_lat);
    g.area_weight_.resize(n_lat);
    double total = 0.0;
    for (std::size_t j = 0; j < n_lat; ++j) {
        const double south = -90.0 + static_cast<double>(j) * dlat;
        const double north = south + dlat;
        g.lat_centers_[j] = south + 0.5 * dlat;
        g.area_weight_[j] = std::sin(north * kDeg) - std::sin(south * kDeg);
        total += g.area_weight_[j];
    }
    for (double& w : g.area_weight_) w /= total * static_cast<double>(n_lon);
    g.lon_centers_.resize(n_lon);
    for (std::size_t k = 0; k < n_lon; ++k) {
        g.lon_centers_[k] = (static_cast<double>(k) + 0.5) * dlon;
    }
    return g;
}

GridPtr make_grid_ptr(std::size_t n_lat, std::size_t n_lon) {
    return std::make_shared<const GridSpec>(make_grid(n_lat, n_lon));
}

std::string Channel::name() const {
    return level_hpa ? variable + std::to_string(*level_hpa) : variable;
}

double level_weight_for(const Channel& channel) {
    if (channel.is_surface()) return 1.0;
    return static_cast<double>(*channel.level_hpa) / kMeanStandardLevel;
}

ChannelCatalog::ChannelCatalog(std::vector<Channel> entries) : entries_(std::move(entries)) {
    if (entries_.empty()) throw ValidationError("ChannelCatalog: at least one channel is required");
    std::stable_sort(entries_.begin(), entries_.end(), [](const Channel& a, const Channel& b) {
        if (a.is_surface() != b.is_surface()) return a.is_surface();
        if (a.variable != b.variable) return a.variable < b.variable;
        return a.level_hpa.value_or(0) < b.level_hpa.value_or(0);
    });
    std::set<std::string> seen;
    std::string canonical;
    for (const auto& ch : entries_) {
        if (ch.variable.empty()) throw ValidationError("ChannelCatalog: empty variable name");
        if (ch.level_hpa && *ch.level_hpa <= 0) {
            throw ValidationError("ChannelCatalog: non-positive pressure level for " + ch.variable);
        }
        if (!seen.insert(ch.variable + ":" + (ch.level_hpa ? std::to_string(*ch.level_hpa) : "surface")).second) {
            throw ValidationError("ChannelCatalog: duplicate channel " + ch.name());
        }
        level_weight_.push_back(level_weight_for(ch));
        canonical += ch.variable + ":" + (ch.level_hpa ? std::to_string(*ch.level_hpa) : "surface") + ";";
    }
    hash_ = sha256_hex(canonical);
}

std::vector<std::string> ChannelCatalog::names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& ch : entries_) out.push_back(ch.name());
    return out;
}

std::optional<std::size_t> ChannelCatalog::find(const std::string& name) const {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].name() == name) return i;
    }
    return std::nullopt;
}

std::size_t ChannelCatalog::index_of(const std::string& name) const {
    if (auto i = find(name)) return *i;
    throw ValidationError("unknown channel '" + name + "'");
}

Field::Field(GridPtr grid, CatalogPtr catalog, std::vector<double> values,
             std::optional<std::int64_t> timestamp)
    : grid_(std::move(grid)), catalog_(std::move(catalog)), values_(std::move(values)),
      timestamp_(timestamp) {
    if (!grid_ || !catalog_) throw ValidationError("Field: grid and catalog are required");
    const std::size_t expected = catalog_->size() * grid_->size();
    if (values_.size() != expected) {
        throw ValidationError("Field: expected " + std::to_string(expected) + " values for " +
                              std::to_string(catalog_->size()) + " channels on " + grid_->describe() +
                              ", got " + std::to_string(values_.size()));
    }
}

Field Field::zeros(GridPtr grid, CatalogPtr catalog, std::optional<std::int64_t> timestamp) {
    const std::size_t n = catalog->size() * grid->size();
    return Field(std::move(grid), std::move(catalog), std::vector<double>(n, 0.0), timestamp);
}

Field Field::zeros_like(const Field& other) {
    return zeros(other.grid_, other.catalog_, other.timestamp_);
}

Field Field::with_values(std::vector<double> values) const {
    return Field(grid_, catalog_, std::move(values), timestamp_);
}

bool Field::same_layout(const Field& other) const {
    return grid_ && other.grid_ && *grid_ == *other.grid_ && *catalog_ == *other.catalog_;
}

bool Field::all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

void require_same_layout(const Field& a, const Field& b, const char* what) {
    if (a.empty() || b.empty()) throw ValidationError(std::string(what) + ": empty field");
    if (!(a.grid() == b.grid())) {
        throw ValidationError(std::string(what) + ": grid mismatch (" + a.grid().describe() + " vs " +
                              b.grid().describe() + ")");
    }
    if (!(a.catalog() == b.catalog())) {
        throw ValidationError(std::string(what) + ": channel catalog mismatch");
    }
}

void require_finite(const Field& f, const char* what) {
    if (!f.all_finite()) throw NumericalError(std::string(what) + ": non-finite values");
}

void Trajectory::validate() const {
    if (states.empty()) throw ValidationError("Trajectory: at least one state is required");
    for (const auto& s : states) require_same_layout(states.front(), s, "Trajectory");
}

void EnsembleSet::validate() const {
    if (members.empty()) throw ValidationError("EnsembleSet: at least one member is required");
    const auto& first = members.front();
    first.validate();
    for (const auto& m : members) {
        m.validate();
        if (m.init_time != first.init_time || m.length() != first.length()) {
            throw ValidationError("EnsembleSet: members differ in init time or length");
        }
        require_same_layout(first.states.front(), m.states.front(), "EnsembleSet");
    }
}

double weighted_plane_mean(const GridSpec& grid, std::span<const double> plane) {
    const std::size_t nlon = grid.n_lon();
    double total = 0.0;
    for (std::size_t j = 0; j < grid.n_lat(); ++j) {
        double row = 0.0;
        for (std::size_t k = 0; k < nlon; ++k) row += plane[j * nlon + k];
        total += grid.area_weight()[j] * row;
    }
    return total;
}

std::vector<double> weighted_mean(const Field& f) {
    std::vector<double> out(f.n_channels());
    for (std::size_t c = 0; c < out.size(); ++c) out[c] = weighted_plane_mean(f.grid(), f.channel(c));
    return out;
}

}  // namespace fmsr
