#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fmsr/diffnet.hpp"
#include "fmsr/grid.hpp"
#include "fmsr/residual.hpp"
#include "fmsr/rng.hpp"

namespace fmsr {

enum class Integrator { euler, heun };

/// Training and sampling hyperparameters.
struct FMConfig {
    std::size_t n_sample_steps = 50;
    Integrator integrator = Integrator::euler;
    std::size_t batch_size = 8;
    std::size_t n_train_steps = 1000;
    double learning_rate = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.98;
    double weight_decay = 0.05;
    double adam_eps = 1e-8;
    /// Cosine decay of the learning rate to zero over n_train_steps.
    bool cosine_decay = false;
    std::uint64_t seed = 0;

    void validate() const;
    nlohmann::json to_json() const;
    /// Keys missing from `j` keep their current values.
    void update_from_json(const nlohmann::json& j);
    static FMConfig from_json(const nlohmann::json& j);
};

/// tau = sigmoid(z), z ~ N(0, 1).
double sample_timestep(Rng& rng);
double timestep_from_normal(double z);

/// Point on the linear path r_tau = tau * r0 + (1 - tau) * eps.
struct PathPoint {
    double tau = 0.0;
    double alpha = 0.0;  // tau
    double sigma = 1.0;  // 1 - tau
    Field noisy;
    Field target_velocity;  // r0 - eps
};

PathPoint make_path_point(const Field& r0, const Field& eps, double tau);

/// Channel mean of level_weight * sum_{j,k} w_j (pred - target)^2. An all-ones
/// error with unit level weights gives 1.
double weighted_fm_loss(const Field& predicted, const Field& target);

/// Same loss on raw [channel][lat][lon] arrays. If `grad` is non-empty it
/// receives d loss / d predicted.
template <typename Scalar>
double weighted_fm_loss(std::span<const Scalar> predicted, std::span<const Scalar> target, const GridSpec& grid,
                        const ChannelCatalog& catalog, std::span<Scalar> grad = {});

/// Decoupled-weight-decay Adam over a float parameter vector. Moments are
/// kept in double.
class AdamW {
public:
    explicit AdamW(const FMConfig& cfg) : cfg_(cfg) {}
    /// `lr_scale` multiplies the configured learning rate for this step.
    void step(std::span<float> params, std::span<const double> grad, double lr_scale = 1.0);
    std::size_t steps_taken() const { return t_; }

private:
    FMConfig cfg_;
    std::vector<double> m_, v_;
    std::size_t t_ = 0;
};

struct TrainResult {
    std::vector<double> loss_history;  // batch-mean loss per optimizer step
};

/// Flow-matching training. Per step: a batch of samples (drawn with
/// replacement), one (tau, eps) draw per element from a stream keyed by
/// (seed, step, element), forward, weighted loss, backward, AdamW update.
/// Nets with n_cond == 0 ignore the samples' conditioning.
/// Throws NumericalError naming the step if the loss is not finite.
TrainResult train(std::span<const ResidualSample> samples, VelocityNet<float>& net, const FMConfig& cfg,
                  const std::function<void(std::size_t, double)>& on_step = {});

void write_loss_csv(const std::filesystem::path& path, std::span<const double> history);

/// Velocity u(r, tau) on a flat state vector.
using VelocityFn = std::function<std::vector<double>(std::span<const double> state, double tau)>;

/// Velocity of a network with fixed (already normalized) conditioning.
VelocityFn net_velocity(const VelocityNet<float>& net, std::span<const double> conditioning, std::size_t n_lat,
                        std::size_t n_lon);

/// Integrates dr/dtau = u(r, tau) from tau = 0 to 1 with uniform steps.
/// Throws NumericalError naming the step when the state becomes non-finite.
std::vector<double> integrate_from(std::vector<double> state, const VelocityFn& velocity, const FMConfig& cfg);

/// Draws eps ~ N(0, I) shaped like `like` and integrates it.
Field sample_residual(const VelocityFn& velocity, const Field& like, const FMConfig& cfg, Rng& rng);

/// Normalized residual sample conditioned on a normalized upsampled state.
/// The net's residual and conditioning channels must both match the field.
Field sample_residual(const VelocityNet<float>& net, const Field& conditioning, const FMConfig& cfg, Rng& rng);

}  // namespace fmsr
