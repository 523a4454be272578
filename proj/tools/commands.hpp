#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fmsr/diffnet.hpp"
#include "fmsr/flow_match.hpp"
#include "fmsr/synth.hpp"

namespace fmsr::cli {

/// Everything a run needs. Resolution order: built-in defaults, the store's
/// run.json, --config, then command-line flags.
struct RunConfig {
    std::uint64_t seed = 0;

    std::size_t n_lat = 48, n_lon = 96, factor = 6;
    std::size_t n_train = 800, n_test = 64;
    std::size_t n_slots = 1;
    std::vector<double> quantile_levels = kDefaultQuantileLevels;
    double foreign_k0 = 8.0;  // zonal low-pass scale of the foreign source

    std::optional<GRFConfig> grf;  // default_grf_config when unset
    NetArch net;
    FMConfig fm;

    std::size_t n_members = 4, n_leads = 2, n_inits = 16;
    std::vector<double> brier_levels{0.01, 0.05, 0.10};

    RunConfig();
    void apply(const nlohmann::json& j);
    nlohmann::json to_json() const;
    void validate() const;

    GRFConfig grf_for(const ChannelCatalog& catalog) const;
    /// Independent seed for one pipeline stage.
    std::uint64_t stage_seed(std::uint64_t stage) const;
};

struct Context {
    std::filesystem::path store;
    RunConfig cfg;
};

int cmd_synth_gen(const Context& ctx);
int cmd_make_pairs(const Context& ctx);
int cmd_fit_stats(const Context& ctx, const std::filesystem::path& out);
int cmd_train(const Context& ctx, const std::filesystem::path& checkpoint, const std::filesystem::path& loss_csv);
int cmd_forecast(const Context& ctx, const std::string& output);

int cmd_sr_apply(const Context& ctx, const std::string& input, const std::string& output);
int cmd_sr_integrated(const Context& ctx, const std::string& output);
int cmd_sr_zeroshot(const Context& ctx, const std::string& input, const std::string& output);

int cmd_verify_design(const Context& ctx, const std::string& sr, const std::string& lr,
                      const std::filesystem::path& out);
int cmd_verify_ensemble(const Context& ctx, const std::string& forecast, const std::filesystem::path& out,
                        const std::filesystem::path& scores_out, const std::filesystem::path& reference,
                        const std::filesystem::path& skill_out);
int cmd_verify_spectra(const Context& ctx, const std::string& input, const std::string& baseline,
                       const std::filesystem::path& out, const std::filesystem::path& summary);

int cmd_sigtest(const Context& ctx, const std::filesystem::path& a, const std::filesystem::path& b,
                const std::filesystem::path& out, std::size_t n_resamples, double level);

}  // namespace fmsr::cli
