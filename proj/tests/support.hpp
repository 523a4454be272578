#pragma once

#include <cmath>
#include <vector>

#include "fmsr/grid.hpp"
#include "fmsr/rng.hpp"

namespace fmsr::test {

inline CatalogPtr catalog(std::vector<Channel> entries) {
    return std::make_shared<const ChannelCatalog>(std::move(entries));
}

inline CatalogPtr two_channels() { return catalog({{"t2m", std::nullopt}, {"z", 500}}); }

inline Field random_field(const GridPtr& g, const CatalogPtr& cat, Rng& rng, double offset = 0.0) {
    std::vector<double> v(g->size() * cat->size());
    for (double& x : v) x = offset + rng.normal();
    return Field(g, cat, std::move(v));
}

// Sum of a few low-wavenumber harmonics: smooth at any resolution.
inline Field smooth_field(const GridPtr& g, const CatalogPtr& cat, Rng& rng) {
    Field f = Field::zeros(g, cat);
    constexpr double deg = 3.14159265358979323846 / 180.0;
    for (std::size_t c = 0; c < cat->size(); ++c) {
        const double a0 = rng.normal(), a1 = rng.normal(), a2 = rng.normal(), p1 = 6.3 * rng.uniform();
        for (std::size_t j = 0; j < g->n_lat(); ++j) {
            const double lat = g->lat_centers()[j] * deg;
            for (std::size_t k = 0; k < g->n_lon(); ++k) {
                const double lon = g->lon_centers()[k] * deg;
                f.at(c, j, k) = a0 + a1 * std::sin(lat) + a2 * std::cos(lat) * std::cos(lon + p1);
            }
        }
    }
    return f;
}

}  // namespace fmsr::test
