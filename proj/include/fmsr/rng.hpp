#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace fmsr {

/// splitmix64 finalizer; used to derive independent substream seeds.
std::uint64_t mix64(std::uint64_t x);

/// Seeded random stream. Substreams are derived from (seed, key...) so that
/// results do not depend on scheduling order.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    /// Stream keyed by a seed and an ordered list of integer keys, e.g.
    /// (seed, member, lead, draw).
    static Rng keyed(std::uint64_t seed, std::initializer_list<std::uint64_t> keys);

    double uniform();               // [0, 1)
    double normal();                // N(0, 1)
    std::uint64_t below(std::uint64_t n);  // uniform integer in [0, n)

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace fmsr
