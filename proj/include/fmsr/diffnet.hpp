#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fmsr/grid.hpp"

namespace fmsr {

/// Architecture of the conditional velocity network.
///
/// input conv (residual + conditioning + broadcast time embedding -> width)
/// -> n_blocks x [SiLU, conv, FiLM(time), SiLU, conv, skip]
/// -> SiLU, output conv (width -> n_channels).
///
/// Convolutions pad circularly in longitude and by edge replication in latitude.
struct NetArch {
    std::size_t n_channels = 1;  // residual (and output) channels
    std::size_t n_cond = 1;      // conditioning channels
    std::size_t width = 32;
    std::size_t n_blocks = 4;
    std::size_t kernel = 3;      // odd
    std::size_t n_freq = 8;      // time embedding has 2 * n_freq features

    std::size_t embed_dim() const { return 2 * n_freq; }
    std::size_t input_planes() const { return n_channels + n_cond + embed_dim(); }
    void validate() const;

    nlohmann::json to_json() const;
    static NetArch from_json(const nlohmann::json& j);
    bool operator==(const NetArch&) const = default;
};

/// Named slice of the flat parameter vector.
struct ParamSlice {
    std::string name;
    std::size_t offset = 0;
    std::size_t size = 0;
    std::size_t fan_in = 0;
};

/// Parameters of the velocity network u(r_tau | conditioning, tau), stored
/// as one flat vector so optimizers and checkpoints can treat them uniformly.
template <typename Scalar>
class VelocityNet {
public:
    explicit VelocityNet(NetArch arch);
    VelocityNet(const VelocityNet& other);
    VelocityNet& operator=(const VelocityNet& other);
    VelocityNet(VelocityNet&&) noexcept = default;
    VelocityNet& operator=(VelocityNet&&) noexcept = default;

    /// Zero-mean uniform initialization with bound 1/sqrt(fan_in). The output
    /// layer is zeroed unless `zero_output` is false.
    void initialize(std::uint64_t seed, bool zero_output = true);

    const NetArch& arch() const { return arch_; }
    const std::vector<ParamSlice>& layout() const { return layout_; }
    const ParamSlice& slice(const std::string& name) const;
    std::size_t param_count() const { return params_.size(); }

    std::span<const Scalar> params() const { return params_; }
    /// Mutable access; invalidates tapes recorded before the call.
    std::span<Scalar> mutable_params() {
        ++version_;
        return params_;
    }

    std::uint64_t id() const { return id_; }
    std::uint64_t version() const { return version_; }

    template <typename Other>
    VelocityNet<Other> cast() const {
        VelocityNet<Other> out(arch_);
        auto dst = out.mutable_params();
        for (std::size_t i = 0; i < params_.size(); ++i) dst[i] = static_cast<Other>(params_[i]);
        return out;
    }

private:
    NetArch arch_;
    std::vector<ParamSlice> layout_;
    std::vector<Scalar> params_;
    std::uint64_t id_;
    std::uint64_t version_ = 0;
};

/// Primal values of one forward pass needed by backward().
template <typename Scalar>
struct Tape {
    std::uint64_t net_id = 0;
    std::uint64_t net_version = 0;
    std::size_t n_lat = 0, n_lon = 0;
    std::vector<Scalar> embed;      // [E]
    std::vector<Scalar> embed_pre;  // [width], before SiLU
    std::vector<Scalar> input;      // [input_planes x P]
    std::vector<std::vector<Scalar>> block_in;  // n_blocks + 1 entries of [width x P]
    std::vector<std::vector<Scalar>> conv1_out;  // [width x P]
    std::vector<std::vector<Scalar>> film_out;   // [width x P], before SiLU
    std::vector<std::vector<Scalar>> film_scale; // [width]
};

/// Sinusoidal embedding of tau in [0, 1]: sin and cos at n_freq geometric
/// frequencies between 1 and 100.
template <typename Scalar>
std::vector<Scalar> time_embedding(double tau, std::size_t n_freq);

/// Forward pass on raw [channel][lat][lon] arrays. Records a tape when
/// `tape` is non-null.
template <typename Scalar>
std::vector<Scalar> forward(const VelocityNet<Scalar>& net, std::span<const Scalar> noisy,
                            std::span<const Scalar> cond, std::size_t n_lat, std::size_t n_lon,
                            double tau, Tape<Scalar>* tape = nullptr);

/// Gradient of sum(upstream * output) with respect to every parameter, laid
/// out like net.params(). Throws ValidationError for a tape from a different
/// net or an older parameter version.
template <typename Scalar>
std::vector<Scalar> backward(const VelocityNet<Scalar>& net, const Tape<Scalar>& tape,
                             std::span<const Scalar> upstream);

/// Field-level forward: both fields on the same grid; the output has the
/// noisy field's layout.
Field forward(const VelocityNet<float>& net, const Field& noisy_residual, const Field& conditioning,
              double tau);

extern template class VelocityNet<float>;
extern template class VelocityNet<double>;

/// Checkpoint header fields besides the parameter blob.
struct CheckpointInfo {
    NetArch arch;
    std::string catalog_hash;
    std::string norm_stats_hash;
};

/// Writes `<prefix>.json` (header) and `<prefix>.bin` (little-endian float32
/// parameters). The header records the blob's SHA-256.
void save_checkpoint(const std::string& prefix, const VelocityNet<float>& net, const CheckpointInfo& info);
VelocityNet<float> load_checkpoint(const std::string& prefix, CheckpointInfo* info = nullptr);

}  // namespace fmsr
