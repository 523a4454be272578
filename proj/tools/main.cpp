#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"
#include "fmsr/errors.hpp"
#include "fmsr/parallel.hpp"

namespace {

namespace fs = std::filesystem;
using fmsr::cli::Context;

struct Globals {
    fs::path store = "fmsr_data";
    fs::path config;
    std::optional<std::uint64_t> seed;
    std::size_t threads = 1;

    // Overrides that apply to several commands.
    std::optional<std::size_t> steps, members, leads, inits, n_train, n_test, sample_steps;
};

Context resolve(const Globals& g) {
    Context ctx;
    ctx.store = g.store;
    if (fs::exists(g.store / "run.json")) {
        std::ifstream in(g.store / "run.json");
        ctx.cfg.apply(nlohmann::json::parse(in));
    }
    if (!g.config.empty()) {
        std::ifstream in(g.config);
        if (!in) throw fmsr::ValidationError("cannot open config " + g.config.string());
        try {
            ctx.cfg.apply(nlohmann::json::parse(in));
        } catch (const nlohmann::json::parse_error& e) {
            throw fmsr::ValidationError(g.config.string() + ": " + e.what());
        }
    }
    auto& c = ctx.cfg;
    if (g.seed) c.seed = *g.seed;
    if (g.steps) c.fm.n_train_steps = *g.steps;
    if (g.sample_steps) c.fm.n_sample_steps = *g.sample_steps;
    if (g.members) c.n_members = *g.members;
    if (g.leads) c.n_leads = *g.leads;
    if (g.inits) c.n_inits = *g.inits;
    if (g.n_train) c.n_train = *g.n_train;
    if (g.n_test) c.n_test = *g.n_test;
    c.validate();
    fmsr::set_thread_count(g.threads);
    return ctx;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Residual flow-matching super-resolution of coarse forecast fields, with verification tools."};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--store", g.store, "Dataset directory")->capture_default_str();
    app.add_option("--config", g.config, "JSON config; overrides the store's run.json");
    app.add_option("--seed", g.seed, "Master seed");
    app.add_option("--threads", g.threads, "Worker threads (1 = sequential)")->capture_default_str();
    app.add_option("--steps", g.steps, "Training steps");
    app.add_option("--sample-steps", g.sample_steps, "ODE steps per SR sample");
    app.add_option("--members", g.members, "Ensemble members");
    app.add_option("--leads", g.leads, "Lead times per forecast");
    app.add_option("--inits", g.inits, "Forecast initializations");
    app.add_option("--n-train", g.n_train, "Training-split length");
    app.add_option("--n-test", g.n_test, "Test-split length");

    std::function<int(const Context&)> run;

    app.add_subcommand("synth-gen", "Generate truth, climatology and foreign-source datasets")
        ->callback([&] { run = fmsr::cli::cmd_synth_gen; });
    app.add_subcommand("make-pairs", "Build upsampled/residual training pairs")
        ->callback([&] { run = fmsr::cli::cmd_make_pairs; });

    fs::path stats_out;
    auto* fit = app.add_subcommand("fit-stats", "Fit normalization statistics (norm_stats.json)");
    fit->add_option("--out", stats_out, "Output path (default <store>/norm_stats.json)");
    fit->callback([&] { run = [&](const Context& c) { return fmsr::cli::cmd_fit_stats(c, stats_out); }; });

    fs::path ckpt, loss_csv;
    auto* tr = app.add_subcommand("train", "Flow-matching training; writes a checkpoint and loss CSV");
    tr->add_option("--checkpoint", ckpt, "Checkpoint prefix (default <store>/checkpoint)");
    tr->add_option("--loss-csv", loss_csv, "Loss history (default <store>/loss.csv)");
    tr->callback([&] { run = [&](const Context& c) { return fmsr::cli::cmd_train(c, ckpt, loss_csv); }; });

    std::string fc_out = "forecast_lr";
    auto* fc = app.add_subcommand("forecast", "Toy emulator ensembles from test-split initial states");
    fc->add_option("--output", fc_out, "Output record")->capture_default_str();
    fc->callback([&] { run = [&](const Context& c) { return fmsr::cli::cmd_forecast(c, fc_out); }; });

    auto* sr = app.add_subcommand("sr", "Super-resolution");
    sr->require_subcommand(1);
    std::string sr_in = "forecast_lr", sr_out = "forecast_sr";
    auto* sr_apply = sr->add_subcommand("apply", "Post-processing SR of a stored forecast or field set");
    sr_apply->add_option("--input", sr_in)->capture_default_str();
    sr_apply->add_option("--output", sr_out)->capture_default_str();
    sr_apply->callback([&] { run = [&](const Context& c) { return fmsr::cli::cmd_sr_apply(c, sr_in, sr_out); }; });
    std::string int_out = "forecast_int";
    auto* sr_int = sr->add_subcommand("integrated", "Forecast with SR reinjected before every step");
    sr_int->add_option("--output", int_out, "HR output record; LR states go to <output>_lr")->capture_default_str();
    sr_int->callback([&] { run = [&](const Context& c) { return fmsr::cli::cmd_sr_integrated(c, int_out); }; });
    std::string zs_in = "foreign_hr", zs_out = "zeroshot_sr";
    auto* sr_zs = sr->add_subcommand("zeroshot", "Coarsen a foreign HR source, then SR");
    sr_zs->add_option("--input", zs_in)->capture_default_str();
    sr_zs->add_option("--output", zs_out)->capture_default_str();
    sr_zs->callback([&] { run = [&](const Context& c) { return fmsr::cli::cmd_sr_zeroshot(c, zs_in, zs_out); }; });

    auto* verify = app.add_subcommand("verify", "Verification reports");
    verify->require_subcommand(1);
    std::string vd_sr = "forecast_sr", vd_lr = "forecast_lr";
    fs::path vd_out = "design.csv";
    auto* vd = verify->add_subcommand("design", "Re-coarsened SR vs LR: corr, activity ratio, NRMSE");
    vd->add_option("--sr", vd_sr)->capture_default_str();
    vd->add_option("--lr", vd_lr)->capture_default_str();
    vd->add_option("--out", vd_out)->capture_default_str();
    vd->callback([&] { run = [&](const Context& c) { return fmsr::cli::cmd_verify_design(c, vd_sr, vd_lr, vd_out); }; });

    std::string ve_fc = "forecast_sr";
    fs::path ve_out = "metrics.csv", ve_scores, ve_ref, ve_skill;
    auto* ve = verify->add_subcommand("ensemble", "Fair ensemble scores against truth");
    ve->add_option("--forecast", ve_fc)->capture_default_str();
    ve->add_option("--out", ve_out)->capture_default_str();
    ve->add_option("--scores", ve_scores, "Per-initialization scores for sigtest");
    ve->add_option("--reference", ve_ref, "Reference metrics CSV for skill scores");
    ve->add_option("--skill-out", ve_skill, "Skill CSV (default <out>.skill.csv)");
    ve->callback([&] {
        run = [&](const Context& c) {
            return fmsr::cli::cmd_verify_ensemble(c, ve_fc, ve_out, ve_scores, ve_ref, ve_skill);
        };
    });

    std::string vs_in = "forecast_sr", vs_base;
    fs::path vs_out = "spectra.csv", vs_summary;
    auto* vs = verify->add_subcommand("spectra", "Zonal spectra and ratios to truth above the coarse cutoff");
    vs->add_option("--input", vs_in)->capture_default_str();
    vs->add_option("--baseline", vs_base, "LR record whose bicubic upsampling is the baseline");
    vs->add_option("--out", vs_out)->capture_default_str();
    vs->add_option("--summary", vs_summary, "Ratio summary CSV (default <out>.summary.csv)");
    vs->callback([&] {
        run = [&](const Context& c) { return fmsr::cli::cmd_verify_spectra(c, vs_in, vs_base, vs_out, vs_summary); };
    });

    fs::path sa, sb, s_out = "sigtest.csv";
    std::size_t n_resamples = 4000;
    double level = 0.95;
    auto* st = app.add_subcommand("sigtest", "Paired block-bootstrap BCa test of score differences (A - B)");
    st->add_option("--a", sa, "Score CSV of model A")->required();
    st->add_option("--b", sb, "Score CSV of model B")->required();
    st->add_option("--out", s_out)->capture_default_str();
    st->add_option("--resamples", n_resamples)->capture_default_str();
    st->add_option("--level", level)->capture_default_str();
    st->callback([&] {
        run = [&](const Context& c) { return fmsr::cli::cmd_sigtest(c, sa, sb, s_out, n_resamples, level); };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    try {
        return run(resolve(g));
    } catch (const fmsr::ValidationError& e) {
        std::cerr << "fmsr: error: " << e.what() << '\n';
        return 2;
    } catch (const fmsr::NumericalError& e) {
        std::cerr << "fmsr: numerical failure: " << e.what() << '\n';
        return 3;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "fmsr: error: malformed JSON: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "fmsr: internal error: " << e.what() << '\n';
        return 1;
    }
}
