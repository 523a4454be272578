#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iostream>
#include <map>

#include "fmsr/errors.hpp"
#include "fmsr/parallel.hpp"
#include "fmsr/regrid.hpp"
#include "fmsr/residual.hpp"
#include "fmsr/sigtest.hpp"
#include "fmsr/spectra.hpp"
#include "fmsr/sr_pipeline.hpp"
#include "fmsr/store.hpp"
#include "fmsr/verify_design.hpp"
#include "fmsr/verify_ensemble.hpp"

namespace fmsr::cli {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void log(const std::string& msg) { std::cerr << "fmsr: " << msg << '\n'; }

template <typename T>
void take(const json& j, const char* key, T& dst) {
    if (j.contains(key)) dst = j.at(key).get<T>();
}

// Stage keys for RunConfig::stage_seed.
enum Stage : std::uint64_t { kTruth = 1, kNetInit, kTrain, kForecast, kSR, kBootstrap };

struct Grids {
    GridPtr hr, lr;
};

Grids grids(const RunConfig& c) {
    return {make_grid_ptr(c.n_lat, c.n_lon), make_grid_ptr(c.n_lat / c.factor, c.n_lon / c.factor)};
}

// ---- climatology records ----

void put_climatology(FieldStore& store, const std::string& name, const Climatology& clim, int step_hours) {
    json meta = {{"n_slots", clim.n_slots},
                 {"step_hours", step_hours},
                 {"quantile_levels", clim.quantile_levels},
                 {"sigma", clim.sigma}};
    store.put(name + "_mean", FieldBatch{clim.slot_mean, meta});
    store.put(name + "_quantiles", FieldBatch{clim.quantiles, meta});
}

Climatology get_climatology(const FieldStore& store, const std::string& name) {
    FieldBatch mean = store.get(name + "_mean");
    FieldBatch q = store.get(name + "_quantiles");
    Climatology c;
    try {
        c.n_slots = mean.metadata.at("n_slots").get<std::size_t>();
        c.quantile_levels = mean.metadata.at("quantile_levels").get<std::vector<double>>();
        c.sigma = mean.metadata.at("sigma").get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw ValidationError("climatology record " + name + ": " + e.what());
    }
    c.slot_mean = std::move(mean.fields);
    c.quantiles = std::move(q.fields);
    if (c.quantiles.size() != c.quantile_levels.size() || c.slot_mean.size() != c.n_slots) {
        throw ValidationError("climatology record " + name + ": field count does not match its metadata");
    }
    return c;
}

std::string clim_name_for(const Field& f, const Grids& g) {
    if (f.grid() == *g.hr) return "clim_hr";
    if (f.grid() == *g.lr) return "clim_lr";
    throw ValidationError("no climatology for grid " + f.grid().describe() + "; run synth-gen with matching sizes");
}

// ---- truth lookup ----

std::map<std::int64_t, const Field*> index_by_time(const std::vector<Field>& fields) {
    std::map<std::int64_t, const Field*> out;
    for (const auto& f : fields) {
        if (f.timestamp()) out[*f.timestamp()] = &f;
    }
    return out;
}

std::vector<Trajectory> truth_for(const std::vector<EnsembleSet>& sets, const std::vector<Field>& truth) {
    const auto by_time = index_by_time(truth);
    std::vector<Trajectory> out;
    for (const auto& e : sets) {
        const auto& m0 = e.members.front();
        Trajectory tr{m0.init_time, m0.lead_step_hours, {}};
        for (const auto& s : m0.states) {
            const auto it = s.timestamp() ? by_time.find(*s.timestamp()) : by_time.end();
            if (it == by_time.end()) {
                throw ValidationError("no truth state for valid time " +
                                      (s.timestamp() ? std::to_string(*s.timestamp()) : std::string("<none>")));
            }
            tr.states.push_back(*it->second);
        }
        out.push_back(std::move(tr));
    }
    return out;
}

std::vector<Field> test_split(const FieldBatch& b, std::size_t n_train) {
    if (b.fields.size() <= n_train) throw ValidationError("truth dataset has no test split");
    return {b.fields.begin() + static_cast<std::ptrdiff_t>(n_train), b.fields.end()};
}

std::vector<Field> train_split(const FieldBatch& b, std::size_t n_train) {
    if (b.fields.size() < n_train) throw ValidationError("truth dataset is shorter than its training split");
    return {b.fields.begin(), b.fields.begin() + static_cast<std::ptrdiff_t>(n_train)};
}

// Initial states for forecasts: evenly spaced over the test split, leaving
// room for n_leads verifying states.
std::vector<Field> forecast_inits(const RunConfig& c, const std::vector<Field>& test) {
    if (test.size() <= c.n_leads) throw ValidationError("test split too short for the requested lead count");
    const std::size_t room = test.size() - c.n_leads;
    const std::size_t n = std::min(c.n_inits, room);
    std::vector<Field> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(test[i * room / n]);
    return out;
}

// ---- operator ----

SROperator load_operator(const Context& ctx) {
    const fs::path stats_path = ctx.store / "norm_stats.json";
    std::ifstream in(stats_path);
    if (!in) throw ValidationError("missing " + stats_path.string() + "; run fit-stats first");
    NormStats stats;
    try {
        stats = NormStats::from_json(json::parse(in));
    } catch (const json::exception& e) {
        throw ValidationError(stats_path.string() + ": " + e.what());
    }
    CheckpointInfo info;
    VelocityNet<float> net = load_checkpoint((ctx.store / "checkpoint").string(), &info);
    if (info.norm_stats_hash != stats.hash()) {
        throw ValidationError("checkpoint was trained with different normalization statistics; rerun train");
    }
    FMConfig fm = ctx.cfg.fm;
    const Grids g = grids(ctx.cfg);
    return make_sr_operator(std::move(net), std::move(stats), g.lr, g.hr, fm, info.catalog_hash);
}

// Sequences of states per lead across (init, member): [lead][sample].
std::vector<std::vector<Field>> by_lead(const std::vector<EnsembleSet>& sets) {
    std::vector<std::vector<Field>> out;
    for (const auto& e : sets) {
        for (const auto& m : e.members) {
            if (out.size() < m.length()) out.resize(m.length());
            for (std::size_t l = 0; l < m.length(); ++l) out[l].push_back(m.states[l]);
        }
    }
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot open " + path.string() + " for writing");
    out << text;
}

json run_metadata(const Context& ctx, const std::string& command) {
    return {{"command", command}, {"seed", ctx.cfg.seed}};
}

}  // namespace

// ---- RunConfig ----

RunConfig::RunConfig() {
    net.width = 16;
    net.n_blocks = 4;
    net.kernel = 5;  // receptive field must span the bicubic stencil of neighbouring coarse cells
    net.n_freq = 8;
    fm.n_train_steps = 3000;
    fm.learning_rate = 2e-3;
    fm.cosine_decay = true;
    fm.batch_size = 8;
    fm.n_sample_steps = 20;
}

void RunConfig::apply(const json& j) {
    try {
        take(j, "seed", seed);
        if (j.contains("world")) {
            const auto& w = j["world"];
            take(w, "n_lat", n_lat);
            take(w, "n_lon", n_lon);
            take(w, "factor", factor);
            take(w, "n_train", n_train);
            take(w, "n_test", n_test);
            take(w, "n_slots", n_slots);
            take(w, "quantile_levels", quantile_levels);
            take(w, "foreign_k0", foreign_k0);
        }
        if (j.contains("grf")) grf = GRFConfig::from_json(j["grf"]);
        if (j.contains("net")) {
            json n = net.to_json();
            n.update(j["net"]);
            net = NetArch::from_json(n);
        }
        if (j.contains("train")) fm.update_from_json(j["train"]);
        if (j.contains("forecast")) {
            const auto& f = j["forecast"];
            take(f, "n_members", n_members);
            take(f, "n_leads", n_leads);
            take(f, "n_inits", n_inits);
        }
        if (j.contains("verify")) take(j["verify"], "brier_levels", brier_levels);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("config: ") + e.what());
    }
}

json RunConfig::to_json() const {
    json j = {{"seed", seed},
              {"world",
               {{"n_lat", n_lat},
                {"n_lon", n_lon},
                {"factor", factor},
                {"n_train", n_train},
                {"n_test", n_test},
                {"n_slots", n_slots},
                {"quantile_levels", quantile_levels},
                {"foreign_k0", foreign_k0}}},
              {"net", net.to_json()},
              {"train", fm.to_json()},
              {"forecast", {{"n_members", n_members}, {"n_leads", n_leads}, {"n_inits", n_inits}}},
              {"verify", {{"brier_levels", brier_levels}}}};
    if (grf) j["grf"] = grf->to_json();
    return j;
}

void RunConfig::validate() const {
    if (factor < 1 || n_lat % factor != 0 || n_lon % factor != 0) {
        throw ValidationError("config: grid " + std::to_string(n_lat) + "x" + std::to_string(n_lon) +
                              " is not divisible by factor " + std::to_string(factor));
    }
    if (n_train < 2 || n_test < 2) throw ValidationError("config: n_train and n_test must be >= 2");
    if (n_members < 2) throw ValidationError("config: n_members must be >= 2 for fair scores");
    if (n_leads < 1 || n_inits < 1) throw ValidationError("config: n_leads and n_inits must be >= 1");
    net.validate();
    fm.validate();
}

GRFConfig RunConfig::grf_for(const ChannelCatalog& catalog) const {
    GRFConfig g = grf ? *grf : default_grf_config(catalog, 0);
    g.seed = stage_seed(kTruth);
    g.validate(catalog.size());
    return g;
}

std::uint64_t RunConfig::stage_seed(std::uint64_t stage) const { return mix64(seed ^ mix64(stage)); }

// ---- commands ----

int cmd_synth_gen(const Context& ctx) {
    const RunConfig& c = ctx.cfg;
    c.validate();
    fs::create_directories(ctx.store);
    FieldStore store(ctx.store);
    const Grids g = grids(c);
    const CatalogPtr cat = default_catalog();
    const GRFConfig grf = c.grf_for(*cat);

    log("generating " + std::to_string(c.n_train + c.n_test) + " truth states on " + g.hr->describe());
    std::vector<Field> hr = generate_truth(g.hr, cat, grf, c.n_train + c.n_test);
    const RegridPlan down = RegridPlan::conservative(g.hr, g.lr);
    std::vector<Field> lr(hr.size());
    parallel_for(hr.size(), [&](std::size_t t) {
        lr[t] = coarsen(hr[t], down);
        lr[t].set_timestamp(hr[t].timestamp());
    });
    json meta = run_metadata(ctx, "synth-gen");
    meta["n_train"] = c.n_train;
    meta["n_test"] = c.n_test;
    store.put("truth_hr", FieldBatch{hr, meta});
    store.put("truth_lr", FieldBatch{lr, meta});

    const auto tr_hr = std::vector<Field>(hr.begin(), hr.begin() + static_cast<std::ptrdiff_t>(c.n_train));
    const auto tr_lr = std::vector<Field>(lr.begin(), lr.begin() + static_cast<std::ptrdiff_t>(c.n_train));
    put_climatology(store, "clim_hr", build_climatology(tr_hr, c.n_slots, c.quantile_levels, grf.step_hours),
                    grf.step_hours);
    put_climatology(store, "clim_lr", build_climatology(tr_lr, c.n_slots, c.quantile_levels, grf.step_hours),
                    grf.step_hours);

    // Oversmoothed stand-in for a foreign high-resolution source.
    std::vector<Field> foreign(c.n_test);
    parallel_for(c.n_test, [&](std::size_t i) {
        foreign[i] = zonal_lowpass(hr[c.n_train + i], c.foreign_k0);
        foreign[i].set_timestamp(hr[c.n_train + i].timestamp());
    });
    store.put("foreign_hr", FieldBatch{foreign, meta});

    RunConfig resolved = c;
    resolved.grf = grf;
    write_text(ctx.store / "run.json", resolved.to_json().dump(2) + "\n");
    log("wrote truth_hr, truth_lr, clim_hr, clim_lr, foreign_hr and run.json to " + ctx.store.string());
    return 0;
}

int cmd_make_pairs(const Context& ctx) {
    const RunConfig& c = ctx.cfg;
    FieldStore store(ctx.store);
    const Grids g = grids(c);
    const auto hr = train_split(store.get("truth_hr"), c.n_train);
    const auto lr = train_split(store.get("truth_lr"), c.n_train);
    const RegridPlan up = RegridPlan::bicubic(g.lr, g.hr);
    std::vector<Field> ups(hr.size()), res(hr.size());
    parallel_for(hr.size(), [&](std::size_t t) {
        Decomposition d = decompose(hr[t], lr[t], up);
        ups[t] = std::move(d.upsampled);
        res[t] = std::move(d.residual);
        ups[t].set_timestamp(hr[t].timestamp());
        res[t].set_timestamp(hr[t].timestamp());
    });
    const json meta = run_metadata(ctx, "make-pairs");
    store.put("pairs_upsampled", FieldBatch{ups, meta});
    store.put("pairs_residual", FieldBatch{res, meta});
    log("wrote " + std::to_string(hr.size()) + " training pairs");
    return 0;
}

namespace {

std::vector<Decomposition> load_pairs(const FieldStore& store) {
    FieldBatch ups = store.get("pairs_upsampled");
    FieldBatch res = store.get("pairs_residual");
    if (ups.fields.size() != res.fields.size()) throw ValidationError("pair datasets differ in length");
    std::vector<Decomposition> out;
    for (std::size_t i = 0; i < ups.fields.size(); ++i) out.push_back({ups.fields[i], res.fields[i]});
    return out;
}

}  // namespace

int cmd_fit_stats(const Context& ctx, const fs::path& out) {
    FieldStore store(ctx.store);
    const NormStats stats = fit_norm_stats(load_pairs(store));
    const fs::path path = out.empty() ? ctx.store / "norm_stats.json" : out;
    write_text(path, stats.to_json().dump(2) + "\n");
    log("wrote " + path.string());
    return 0;
}

int cmd_train(const Context& ctx, const fs::path& checkpoint, const fs::path& loss_csv) {
    const RunConfig& c = ctx.cfg;
    FieldStore store(ctx.store);
    const fs::path stats_path = ctx.store / "norm_stats.json";
    std::ifstream in(stats_path);
    if (!in) throw ValidationError("missing " + stats_path.string() + "; run fit-stats first");
    const NormStats stats = NormStats::from_json(json::parse(in));
    const auto pairs = load_pairs(store);
    std::vector<ResidualSample> samples;
    samples.reserve(pairs.size());
    for (const auto& d : pairs) samples.push_back(make_residual_sample(d, stats));

    NetArch arch = c.net;
    arch.n_channels = arch.n_cond = stats.channels.size();
    VelocityNet<float> net(arch);
    net.initialize(c.stage_seed(kNetInit));
    FMConfig fm = c.fm;
    fm.seed = c.stage_seed(kTrain);
    log("training " + std::to_string(net.param_count()) + " parameters for " + std::to_string(fm.n_train_steps) +
        " steps on " + std::to_string(samples.size()) + " samples");
    const auto t0 = std::chrono::steady_clock::now();
    const TrainResult res = train(samples, net, fm, [&](std::size_t step, double loss) {
        if ((step + 1) % 100 == 0 || step == 0) {
            const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            log("step " + std::to_string(step + 1) + " loss " + std::to_string(loss) + " (" +
                std::to_string(static_cast<int>(s)) + " s)");
        }
    });
    const fs::path ckpt = checkpoint.empty() ? ctx.store / "checkpoint" : checkpoint;
    save_checkpoint(ckpt.string(), net, CheckpointInfo{arch, stats.catalog_hash, stats.hash()});
    const fs::path csv = loss_csv.empty() ? ctx.store / "loss.csv" : loss_csv;
    write_loss_csv(csv, res.loss_history);
    log("wrote " + ckpt.string() + " and " + csv.string());
    return 0;
}

int cmd_forecast(const Context& ctx, const std::string& output) {
    const RunConfig& c = ctx.cfg;
    FieldStore store(ctx.store);
    const auto test = test_split(store.get("truth_lr"), c.n_train);
    const Climatology clim = get_climatology(store, "clim_lr");
    const CatalogPtr cat = test.front().catalog_ptr();
    const ToyForecastModel model =
        calibrated_emulator(c.grf_for(*cat), clim.slot_mean.front(), clim.sigma, c.stage_seed(kForecast));
    const auto inits = forecast_inits(c, test);
    std::vector<EnsembleSet> sets;
    for (const auto& init : inits) sets.push_back(emulate_forecast(init, model, c.n_leads, c.n_members));
    store.put_ensembles(output, sets, run_metadata(ctx, "forecast"));
    log("wrote " + std::to_string(sets.size()) + " ensembles of " + std::to_string(c.n_members) + " members to " +
        output);
    return 0;
}

int cmd_sr_apply(const Context& ctx, const std::string& input, const std::string& output) {
    FieldStore store(ctx.store);
    const SROperator op = load_operator(ctx);
    const std::uint64_t seed = ctx.cfg.stage_seed(kSR);
    if (store.is_ensemble(input)) {
        const auto sets = store.get_ensembles(input);
        std::vector<EnsembleSet> out;
        for (const auto& e : sets) out.push_back(super_resolve_ensemble(op, e, seed));
        store.put_ensembles(output, out, run_metadata(ctx, "sr apply"));
    } else {
        FieldBatch b = store.get(input);
        Trajectory tr{0, 24, std::move(b.fields)};
        const Trajectory sr = super_resolve_trajectory(op, tr, seed);
        store.put(output, FieldBatch{sr.states, run_metadata(ctx, "sr apply")});
    }
    log("super-resolved " + input + " into " + output);
    return 0;
}

int cmd_sr_integrated(const Context& ctx, const std::string& output) {
    const RunConfig& c = ctx.cfg;
    FieldStore store(ctx.store);
    const SROperator op = load_operator(ctx);
    const auto test = test_split(store.get("truth_lr"), c.n_train);
    const Climatology clim = get_climatology(store, "clim_lr");
    const ToyForecastModel model = calibrated_emulator(c.grf_for(test.front().catalog()), clim.slot_mean.front(),
                                                       clim.sigma, c.stage_seed(kForecast));
    const std::uint64_t seed = c.stage_seed(kSR);
    std::vector<EnsembleSet> lr, hr;
    for (const auto& init : forecast_inits(c, test)) {
        lr.push_back(integrated_forecast(op, init, model, c.n_leads, c.n_members, seed));
        hr.push_back(super_resolve_ensemble(op, lr.back(), seed));
    }
    store.put_ensembles(output + "_lr", lr, run_metadata(ctx, "sr integrated"));
    store.put_ensembles(output, hr, run_metadata(ctx, "sr integrated"));
    log("wrote " + output + " and " + output + "_lr");
    return 0;
}

int cmd_sr_zeroshot(const Context& ctx, const std::string& input, const std::string& output) {
    FieldStore store(ctx.store);
    const SROperator op = load_operator(ctx);
    FieldBatch b = store.get(input);
    Trajectory tr{0, 24, std::move(b.fields)};
    const Trajectory sr = zero_shot_apply(op, tr, ctx.cfg.stage_seed(kSR));
    store.put(output, FieldBatch{sr.states, run_metadata(ctx, "sr zeroshot")});
    log("wrote " + output);
    return 0;
}

int cmd_verify_design(const Context& ctx, const std::string& sr, const std::string& lr, const fs::path& out) {
    FieldStore store(ctx.store);
    const Grids g = grids(ctx.cfg);
    const Climatology clim = get_climatology(store, "clim_lr");
    const RegridPlan down = RegridPlan::conservative(g.hr, g.lr);
    std::vector<std::vector<Field>> sr_lead, lr_lead;
    std::vector<int> lead_h;
    if (store.is_ensemble(sr)) {
        const auto s = store.get_ensembles(sr);
        const auto l = store.get_ensembles(lr);
        sr_lead = by_lead(s);
        lr_lead = by_lead(l);
        for (std::size_t i = 0; i < sr_lead.size(); ++i)
            lead_h.push_back(static_cast<int>(i + 1) * s.front().members.front().lead_step_hours);
    } else {
        sr_lead = {store.get(sr).fields};
        lr_lead = {store.get(lr).fields};
        lead_h = {0};
    }
    if (sr_lead.size() != lr_lead.size()) throw ValidationError("verify design: lead counts differ");
    DesignReport rep;
    for (std::size_t l = 0; l < sr_lead.size(); ++l) {
        std::vector<Field> re(sr_lead[l].size());
        parallel_for(re.size(), [&](std::size_t i) {
            re[i] = recoarsen_for_validation(sr_lead[l][i], down);
            re[i].set_timestamp(sr_lead[l][i].timestamp());
        });
        rep.n_samples = re.size();
        auto rows = design_rows(re, lr_lead[l], clim, lead_h[l]);
        rep.rows.insert(rep.rows.end(), rows.begin(), rows.end());
    }
    write_design_csv(out, rep);
    log("wrote " + out.string());
    return 0;
}

int cmd_verify_ensemble(const Context& ctx, const std::string& forecast, const fs::path& out,
                        const fs::path& scores_out, const fs::path& reference, const fs::path& skill_out) {
    const RunConfig& c = ctx.cfg;
    FieldStore store(ctx.store);
    const Grids g = grids(c);
    const auto sets = store.get_ensembles(forecast);
    if (sets.empty()) throw ValidationError(forecast + " holds no ensembles");
    const Field& probe = sets.front().members.front().states.front();
    const std::string cname = clim_name_for(probe, g);
    const Climatology clim = get_climatology(store, cname);
    const auto truth_batch = store.get(cname == "clim_hr" ? "truth_hr" : "truth_lr");
    const auto truth = truth_for(sets, truth_batch.fields);

    MetricReport rep = evaluate_ensembles(sets, truth, clim, c.brier_levels);
    write_metric_csv(out, rep);
    log("wrote " + out.string());

    if (!scores_out.empty()) {
        std::vector<ScoreRow> rows;
        for (std::size_t t = 0; t < sets.size(); ++t) {
            const auto one = evaluate_ensembles(std::span(sets).subspan(t, 1), std::span(truth).subspan(t, 1), clim,
                                                c.brier_levels);
            for (const auto& r : one.rows) {
                if (r.metric == "ssr" || r.metric == "spread") continue;
                const std::string metric = r.q ? r.metric + "_q" + std::to_string(r.q.value()).substr(0, 4) : r.metric;
                rows.push_back({metric, r.channel, r.lead_h, sets[t].members.front().init_time, r.value});
            }
        }
        write_score_csv(scores_out, rows);
        log("wrote " + scores_out.string());
    }
    if (!reference.empty()) {
        const MetricReport skill = skill_report(rep, read_metric_csv(reference));
        const fs::path path = skill_out.empty() ? fs::path(out).replace_extension(".skill.csv") : skill_out;
        write_metric_csv(path, skill);
        log("wrote " + path.string());
    }
    return 0;
}

int cmd_verify_spectra(const Context& ctx, const std::string& input, const std::string& baseline,
                       const fs::path& out, const fs::path& summary) {
    const RunConfig& c = ctx.cfg;
    FieldStore store(ctx.store);
    const Grids g = grids(c);
    auto states_of = [&](const std::string& name) {
        std::vector<Field> out_states;
        if (store.is_ensemble(name)) {
            for (auto& lead : by_lead(store.get_ensembles(name)))
                for (auto& f : lead) out_states.push_back(std::move(f));
        } else {
            out_states = store.get(name).fields;
        }
        return out_states;
    };
    auto mean_spectrum = [](const std::vector<Field>& fs_) {
        std::vector<Spectrum> s(fs_.size());
        parallel_for(fs_.size(), [&](std::size_t i) { s[i] = zonal_power_spectrum(fs_[i]); });
        return average_spectra(s);
    };

    const auto model = states_of(input);
    if (model.empty() || !(model.front().grid() == *g.hr)) {
        throw ValidationError("verify spectra: " + input + " must hold fields on " + g.hr->describe());
    }
    // Reference: truth at the valid times present in the input.
    const auto truth = store.get("truth_hr");
    const auto by_time = index_by_time(truth.fields);
    std::vector<Field> ref;
    for (const auto& f : model) {
        const auto it = f.timestamp() ? by_time.find(*f.timestamp()) : by_time.end();
        if (it != by_time.end()) ref.push_back(*it->second);
    }
    if (ref.empty()) ref = test_split(truth, c.n_train);

    const std::size_t cutoff = cutoff_wavenumber(g.lr->n_lon());
    const Spectrum s_model = mean_spectrum(model);
    const Spectrum s_ref = mean_spectrum(ref);
    write_spectrum_csv(out, s_model, cutoff);

    std::vector<std::pair<std::string, SpectrumRatio>> ratios{{input, spectrum_ratio(s_model, s_ref, cutoff)}};
    if (!baseline.empty()) {
        const RegridPlan up = RegridPlan::bicubic(g.lr, g.hr);
        auto lr = states_of(baseline);
        std::vector<Field> bic(lr.size());
        parallel_for(lr.size(), [&](std::size_t i) { bic[i] = interpolate_up(lr[i], up); });
        ratios.emplace_back("bicubic", spectrum_ratio(mean_spectrum(bic), s_ref, cutoff));
    }
    const fs::path sum_path = summary.empty() ? fs::path(out).replace_extension(".summary.csv") : summary;
    std::ofstream so(sum_path);
    if (!so) throw ValidationError("cannot open " + sum_path.string() + " for writing");
    so << "channel,source,cutoff_k,median_ratio_above_cutoff\n";
    so.precision(10);
    for (std::size_t ch = 0; ch < s_model.channels.size(); ++ch)
        for (const auto& [name, r] : ratios)
            so << s_model.channels[ch] << ',' << name << ',' << cutoff << ',' << r.median_above_cutoff(ch) << '\n';
    log("wrote " + out.string() + " and " + sum_path.string());
    return 0;
}

int cmd_sigtest(const Context& ctx, const fs::path& a, const fs::path& b, const fs::path& out,
                std::size_t n_resamples, double level) {
    const auto pairs = pair_scores(read_score_csv(a), read_score_csv(b));
    std::vector<SigRow> rows;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        pairs[i].validate();
        rows.push_back({pairs[i], bca_interval(pairs[i].diffs, mix64(ctx.cfg.stage_seed(kBootstrap) + i),
                                               n_resamples, level)});
    }
    write_sigtest_csv(out, rows);
    std::size_t n_sig = 0;
    for (const auto& r : rows) n_sig += r.result.significant ? 1 : 0;
    log("wrote " + out.string() + " (" + std::to_string(n_sig) + " of " + std::to_string(rows.size()) +
        " differences significant)");
    return 0;
}

}  // namespace fmsr::cli
