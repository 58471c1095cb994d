// hetmech: pattern generation, simulation, dataset assembly, surrogate
// training and evaluation from one binary.

#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hetmech/chx/cahn_hilliard.hpp"
#include "hetmech/chx/reference_set.hpp"
#include "hetmech/dataset/forge.hpp"
#include "hetmech/experiment/experiment.hpp"
#include "hetmech/metrics/metrics.hpp"
#include "hetmech/nn/trainer.hpp"
#include "hetmech/synth/generators.hpp"

using namespace hetmech;
using nlohmann::json;

namespace {

void log_line(const std::string& m) { std::cerr << "[hetmech] " << m << "\n"; }

// Flags shared by every subcommand.
struct Common {
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
    std::string out;
    std::string config;
};

void add_common(CLI::App* app, Common& c, const std::string& out_help) {
    app->add_option("--seed", c.seed, "RNG seed");
    app->add_option("--jobs", c.jobs, "worker threads")->check(CLI::PositiveNumber);
    app->add_option("--out", c.out, out_help);
    app->add_option("--config", c.config, "JSON file whose keys supply option values (flags override)");
}

fea::FidelityProfile fidelity_arg(const std::string& s) {
    if (s == "low" || s == "high") return fea::fidelity_by_name(s);
    if (!fs::exists(s)) throw ConfigError("fidelity", "expected low, high or a JSON profile file, got '" + s + "'");
    return fea::FidelityProfile::from_json(json::parse(read_file(s)));
}

fs::path require_out(const Common& c) {
    if (c.out.empty()) throw ConfigError("out", "an output location is required (--out)");
    return c.out;
}

std::vector<Pattern> load_any_patterns(const fs::path& manifest, std::vector<std::string>* ids = nullptr) {
    const auto text = read_file(manifest);
    const auto header = parse_csv(text).header;
    if (std::find(header.begin(), header.end(), "split_tag") == header.end()) {
        std::vector<PatternEntry> entries;
        auto pats = load_pattern_set(manifest, &entries);
        if (ids)
            for (const auto& e : entries) ids->push_back(e.pattern_id);
        return pats;
    }
    // Dataset manifest: one pattern per base id.
    const auto m = dataset::parse_manifest_csv(text);
    std::vector<Pattern> pats;
    std::set<std::string> seen;
    for (const auto& e : m.entries) {
        if (!seen.insert(e.pattern_id).second) continue;
        Pattern p = decode_pbm(read_file(resolve_relative(manifest, e.file_path)));
        p.source = e.source;
        p.seed_or_id = e.pattern_id;
        pats.push_back(std::move(p));
        if (ids) ids->push_back(e.pattern_id);
    }
    return pats;
}

void print_json(const json& j) { std::cout << j.dump(2) << "\n"; }

// ---- subcommand handlers ---------------------------------------------------

struct ChxRunArgs {
    chx::CHConfig cfg;
    double threshold = 0.5;
    std::string prefix = "ch";
};

void cmd_chx_run(ChxRunArgs a, const Common& c) {
    a.cfg.seed = c.seed;
    if (a.cfg.snapshot_steps.empty()) a.cfg.snapshot_steps = {a.cfg.n_steps};
    const auto out = require_out(c);
    a.cfg.validate();
    double e0 = 0.0, e_last = 0.0, m0 = 0.0, drift = 0.0;
    bool monotone = true;
    const auto snaps = chx::run_simulation(a.cfg, [&](const chx::ConcentrationField& f) {
        const double e = chx::free_energy(f, a.cfg.lambda_i, a.cfg.omega);
        if (f.step_index == 0) {
            e0 = e_last = e;
            m0 = f.mean();
        } else {
            monotone = monotone && e <= e_last;
            e_last = e;
            drift = std::max(drift, std::abs(f.mean() - m0) / m0);
        }
    });
    std::vector<Pattern> pats;
    std::vector<PatternMeta> metas;
    for (const auto& [step, f] : snaps) {
        pats.push_back(chx::binarize_and_downsample(f, a.threshold));
        metas.push_back({PatternSource::cahn_hilliard, std::to_string(a.cfg.seed), a.cfg.c0, step});
    }
    write_pattern_set(out, pats, metas, a.prefix);
    print_json({{"snapshots", snaps.size()},
                {"energy_initial", e0},
                {"energy_final", e_last},
                {"energy_non_increasing", monotone},
                {"max_relative_mass_drift", drift},
                {"manifest", (out / "manifest.csv").string()}});
}

void cmd_chx_reference(int runs, const Common& c) {
    chx::ReferenceRecipe r;
    r.n_runs = runs;
    if (c.seed) r.seed = c.seed;
    const auto out = require_out(c);
    std::vector<Pattern> pats;
    std::vector<PatternMeta> metas;
    log_line("running " + std::to_string(runs) + " Cahn-Hilliard runs");
    chx::generate_reference_set(r, c.jobs, pats, metas);
    write_pattern_set(out, pats, metas, "ch");
    double frac = 0.0;
    for (const auto& p : pats) frac += p.stiff_fraction();
    print_json({{"patterns", pats.size()}, {"mean_stiff_fraction", frac / pats.size()}});
}

double fraction_or_calibrated(double given, const std::string& reference) {
    if (given > 0.0) return given;
    if (reference.empty()) throw ConfigError("fraction", "give --fraction or --reference to calibrate it");
    return synth::calibrate_fraction(load_any_patterns(reference));
}

void write_synth(const std::vector<Pattern>& pats, PatternSource src, const Common& c, const std::string& prefix) {
    std::vector<PatternMeta> metas;
    for (std::size_t i = 0; i < pats.size(); ++i) metas.push_back({src, pats[i].seed_or_id, std::nullopt, std::nullopt});
    write_pattern_set(require_out(c), pats, metas, prefix);
    print_json({{"patterns", pats.size()}, {"manifest", (fs::path(c.out) / "manifest.csv").string()}});
}

void cmd_synth_procedural(int n, int grid, double fraction, int order, const std::string& reference, const Common& c) {
    synth::ProceduralConfig cfg;
    cfg.base_grid = grid;
    cfg.interp_order = order;
    cfg.target_fraction = fraction_or_calibrated(fraction, reference);
    std::vector<Pattern> pats;
    for (int i = 0; i < n; ++i) {
        cfg.seed = mix_seed(c.seed, static_cast<std::uint64_t>(i));
        pats.push_back(synth::procedural_pattern(cfg));
    }
    write_synth(pats, PatternSource::procedural, c, "proc");
}

void cmd_synth_bernoulli(int n, double p, const std::string& reference, const Common& c) {
    const double prob = fraction_or_calibrated(p, reference);
    std::vector<Pattern> pats;
    for (int i = 0; i < n; ++i) pats.push_back(synth::bernoulli_pattern({prob, mix_seed(c.seed, static_cast<std::uint64_t>(i))}));
    write_synth(pats, PatternSource::bernoulli, c, "bern");
}

void cmd_simulate(const std::string& patterns, const std::string& fidelity, const std::string& cache, bool disp,
                  const Common& c) {
    const auto out = require_out(c);
    const auto prof = fidelity_arg(fidelity);
    std::vector<std::string> ids;
    const auto pats = load_any_patterns(patterns, &ids);
    dataset::BuildOptions bo;
    bo.cache_dir = cache;
    bo.jobs = c.jobs;
    bo.write_displacements = disp;
    bo.log = log_line;
    std::size_t solved = 0, cached = 0;
    const auto recs = dataset::simulate_batch(pats, ids, prof, bo, &solved, &cached);
    write_file_atomic(out / "sims.csv", dataset::sim_records_to_csv(recs));
    if (disp)
        for (const auto& r : recs)
            write_file_atomic(out / "displacements" / (r.pattern_id + ".disp"), dataset::encode_displacement(r.displacement_field));
    print_json({{"records", recs.size()}, {"solved", solved}, {"cached", cached}, {"fidelity", prof.name}});
}

struct DatasetArgs {
    dataset::MixSpec mix;
    std::string real_pool = "data/reference/manifest.csv";
    std::string fidelity = "low";
    std::string cache;
    bool displacements = false;
};

void cmd_dataset_build(DatasetArgs a, const Common& c) {
    a.mix.seed = c.seed;
    dataset::BuildOptions bo;
    bo.out_dir = require_out(c);
    bo.cache_dir = a.cache.empty() ? bo.out_dir / "sim_cache" : fs::path(a.cache);
    bo.jobs = c.jobs;
    bo.write_displacements = a.displacements;
    bo.log = log_line;
    const auto pool = dataset::load_pool(a.real_pool, "real");
    std::optional<dataset::PatternPool> ext;
    if (a.mix.n_synth > 0 && a.mix.synth_source != "procedural" && a.mix.synth_source != "bernoulli") {
        if (!fs::exists(a.mix.synth_source))
            throw ConfigError("synth_source", "expected procedural, bernoulli or a pattern manifest path");
        ext = dataset::load_pool(a.mix.synth_source, a.mix.synth_source);
    }
    const auto r = dataset::build_mixed_dataset(a.mix, fidelity_arg(a.fidelity), pool, bo, ext ? &*ext : nullptr);
    const auto& m = r.manifest;
    print_json({{"train_rows", m.count(dataset::SplitTag::train)},
                {"val_rows", m.count(dataset::SplitTag::val)},
                {"test_rows", m.count(dataset::SplitTag::test)},
                {"solved", r.n_solved},
                {"cached", r.n_cached},
                {"config_hash", m.provenance.at("config_hash")}});
}

struct TrainArgs {
    nn::TrainConfig tc;
    std::string manifest;
    std::string init;
    bool compare_scratch = false;
};

json train_and_save(const nn::TrainConfig& tc, const std::string& manifest_path, const nn::Checkpoint* init,
                    const fs::path& out, const std::string& label) {
    const fs::path mp(manifest_path);
    const auto m = dataset::read_manifest(mp);
    const auto dir = mp.parent_path();
    const auto tr = dataset::load_split(m, dataset::SplitTag::train, dir);
    const auto va = dataset::load_split(m, dataset::SplitTag::val, dir);
    const auto te = dataset::load_split(m, dataset::SplitTag::test, dir);
    log_line(label + ": " + std::to_string(tr.size()) + " train rows, " + std::to_string(va.size()) + " val, " +
             std::to_string(te.size()) + " test");
    auto r = nn::train_model(tc, tr, va.size() ? &va : nullptr, init, [&](const nn::EpochStats& s) {
        if ((s.epoch + 1) % 10 == 0)
            log_line(label + " epoch " + std::to_string(s.epoch + 1) + " train " + format_double(s.train_mse) + " val " +
                     format_double(s.val_mse));
    });
    r.best.provenance["label"] = label;
    r.best.provenance["dataset_hash"] = m.provenance.value("config_hash", std::string());
    r.last.provenance = r.best.provenance;
    nn::save_checkpoint(out / "best.ckpt", r.best);
    nn::save_checkpoint(out / "last.ckpt", r.last);
    write_file_atomic(out / "history.csv", to_csv(nn::history_table(r.history)));
    json res = {{"best_epoch", r.best_epoch}, {"epochs", r.history.size()}, {"checkpoint", (out / "best.ckpt").string()}};
    if (te.size()) {
        const auto ev = nn::evaluate(r.best, te);
        res["test"] = {{"r2", ev.score.r2}, {"mae", ev.score.mae}, {"n", ev.n}, {"rotation_spread", ev.rotation_spread}};
    }
    write_file_atomic(out / "result.json", res.dump(2) + "\n");
    return res;
}

void cmd_train(TrainArgs a, const Common& c) {
    a.tc.seed = c.seed;
    a.tc.validate();
    const auto out = require_out(c);
    std::optional<nn::Checkpoint> init;
    if (!a.init.empty()) init = nn::load_checkpoint(a.init);
    print_json(train_and_save(a.tc, a.manifest, init ? &*init : nullptr, out, "train"));
}

void cmd_transfer(TrainArgs a, const Common& c) {
    a.tc.seed = c.seed;
    a.tc.validate();
    const auto out = require_out(c);
    const auto init = nn::load_checkpoint(a.init);
    json res = {{"finetune", train_and_save(a.tc, a.manifest, &init, out / "finetune", "finetune")}};
    if (a.compare_scratch) {
        res["scratch"] = train_and_save(a.tc, a.manifest, nullptr, out / "scratch", "scratch");
        if (res["finetune"].contains("test"))
            res["mae_reduction"] = 1.0 - res["finetune"]["test"]["mae"].get<double>() / res["scratch"]["test"]["mae"].get<double>();
    }
    write_file_atomic(out / "transfer.json", res.dump(2) + "\n");
    print_json(res);
}

void cmd_metrics_frechet(const std::string& a, const std::string& b, int n_boot, const Common& c) {
    const auto pa = load_any_patterns(a), pb = load_any_patterns(b);
    const auto xa = metrics::descriptor_matrix(pa), xb = metrics::descriptor_matrix(pb);
    const double d = metrics::frechet_distance(metrics::stats_from_rows(xa), metrics::stats_from_rows(xb));
    json res = {{"frechet", d}, {"n_a", pa.size()}, {"n_b", pb.size()}};
    if (n_boot > 0) res["bootstrap_se"] = metrics::bootstrap_frechet_se(xa, xb, n_boot, c.seed);
    if (!c.out.empty()) write_file_atomic(c.out, res.dump(2) + "\n");
    print_json(res);
}

void cmd_metrics_report(const std::string& dir) {
    const auto path = fs::path(dir) / "metrics_report.json";
    if (!fs::exists(path)) throw ConfigError("experiment", "no metrics_report.json in " + dir);
    const auto r = json::parse(read_file(path));
    std::printf("experiment %s  (config %s, hetmech %s)\n", r.at("experiment").get<std::string>().c_str(),
                r.at("config_hash").get<std::string>().c_str(), r.at("version").get<std::string>().c_str());
    if (r.contains("mixes") && !r["mixes"].empty()) {
        std::printf("\n%-20s %-12s %6s %6s %10s %10s\n", "mix", "synth", "real", "synth", "median R2", "median MAE");
        for (const auto& m : r["mixes"])
            std::printf("%-20s %-12s %6d %6d %10.4f %10.4g\n", m["name"].get<std::string>().c_str(),
                        m["synth_source"].get<std::string>().c_str(), m["n_real"].get<int>(), m["n_synth"].get<int>(),
                        m["median_r2"].get<double>(), m["median_mae"].get<double>());
    }
    if (r.contains("transfer")) {
        std::printf("\n%-6s %12s %12s %12s %12s %10s\n", "seed", "pretrain R2", "finetune R2", "finetune MAE",
                    "scratch MAE", "MAE cut");
        for (const auto& t : r["transfer"]["replicates"])
            std::printf("%-6llu %12.4f %12.4f %12.4g %12.4g %9.1f%%\n",
                        static_cast<unsigned long long>(t["seed"].get<std::uint64_t>()), t["pretrain"]["r2"].get<double>(),
                        t["finetune"]["r2"].get<double>(), t["finetune"]["mae"].get<double>(),
                        t["scratch"]["mae"].get<double>(), 100.0 * t["mae_reduction"].get<double>());
        std::printf("median MAE reduction %.1f%%\n", 100.0 * r["transfer"]["median_mae_reduction"].get<double>());
    }
    if (r.contains("histogram"))
        for (const auto& [src, ov] : r["histogram"]["overlap_with_real"].items())
            std::printf("Delta Psi histogram overlap real vs %s: %.3f\n", src.c_str(), ov.get<double>());
}

void cmd_metrics_evaluate(const std::string& ckpt, const std::string& manifest) {
    const auto c = nn::load_checkpoint(ckpt);
    const fs::path mp(manifest);
    const auto te = dataset::load_split(dataset::read_manifest(mp), dataset::SplitTag::test, mp.parent_path());
    const auto ev = nn::evaluate(c, te);
    print_json({{"r2", ev.score.r2}, {"mae", ev.score.mae}, {"n", ev.n}, {"rotation_spread", ev.rotation_spread}});
}

void cmd_experiment_run(bool dry, const Common& c, CLI::App* sub) {
    if (c.config.empty()) throw ConfigError("config", "experiment run needs --config");
    auto cfg = experiment::load_config(c.config);
    if (sub->count("--seed")) cfg.seed = c.seed;
    if (sub->count("--jobs")) cfg.jobs = c.jobs;
    if (sub->count("--out")) cfg.out = c.out;
    for (auto& m : cfg.mixes) m.mix.seed = cfg.seed;
    cfg.transfer.pretrain.seed = cfg.seed;
    experiment::RunOptions opt;
    opt.dry_run = dry;
    opt.log = log_line;
    if (dry) {
        cfg.validate();
        std::cout << experiment::version_and_provenance(cfg) << "\nplanned stages:\n";
        std::cout << experiment::describe_plan(experiment::run_experiment(cfg, opt).plan);
        return;
    }
    const auto r = experiment::run_experiment(cfg, opt);
    log_line("stages run " + std::to_string(r.stages_run) + ", simulations " + std::to_string(r.simulations) +
             ", epochs " + std::to_string(r.epochs));
    cmd_metrics_report(cfg.out.string());
}

// ---- config expansion ------------------------------------------------------

// Turns the JSON object in the --config file into option tokens placed right
// after the subcommand path, so explicit flags (which come later) take
// precedence. `experiment run` reads its config file itself.
std::vector<std::string> expand_config(std::vector<std::string> args) {
    std::size_t path_end = 0;
    while (path_end < args.size() && !args[path_end].empty() && args[path_end][0] != '-') ++path_end;
    if (path_end > 0 && args[0] == "experiment") return args;
    std::string file;
    for (std::size_t i = path_end; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) file = args[i + 1];
        if (args[i].rfind("--config=", 0) == 0) file = args[i].substr(9);
    }
    if (file.empty()) return args;
    json j;
    try {
        j = json::parse(read_file(file), nullptr, true, true);
    } catch (const json::exception& e) {
        throw ConfigError(file, std::string("not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError(file, "config must be a JSON object");
    std::vector<std::string> extra;
    for (const auto& [k, v] : j.items()) {
        std::string flag = "--" + k;
        std::replace(flag.begin(), flag.end(), '_', '-');
        if (flag == "--config") continue;
        auto scalar = [](const json& x) { return x.is_string() ? x.get<std::string>() : x.dump(); };
        if (v.is_boolean()) {
            if (v.get<bool>()) extra.push_back(flag);
        } else if (v.is_array()) {
            extra.push_back(flag);
            for (const auto& e : v) extra.push_back(scalar(e));
        } else if (v.is_object()) {
            throw ConfigError(k, "nested objects are only accepted by experiment configs");
        } else {
            extra.push_back(flag);
            extra.push_back(scalar(v));
        }
    }
    args.insert(args.begin() + static_cast<std::ptrdiff_t>(path_end), extra.begin(), extra.end());
    return args;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hetmech: heterogeneous microstructure mechanics workbench"};
    app.set_version_flag("--version", experiment::version());
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    Common common;
    std::function<void()> action;

    // chx
    auto* chx_cmd = app.add_subcommand("chx", "Cahn-Hilliard pattern generation");
    chx_cmd->require_subcommand(1);
    ChxRunArgs chx_args;
    auto* chx_run = chx_cmd->add_subcommand("run", "one Cahn-Hilliard run, snapshots written as patterns");
    add_common(chx_run, common, "output directory for patterns + manifest.csv");
    chx_run->add_option("--c0", chx_args.cfg.c0, "initial mean concentration");
    chx_run->add_option("--noise-amp", chx_args.cfg.noise_amp, "initial fluctuation half-range");
    chx_run->add_option("--init-grid", chx_args.cfg.init_grid, "noise blocks per side");
    chx_run->add_option("--mobility", chx_args.cfg.mobility);
    chx_run->add_option("--lambda", chx_args.cfg.lambda_i, "interface parameter");
    chx_run->add_option("--omega", chx_args.cfg.omega, "double-well depth");
    chx_run->add_option("--dt", chx_args.cfg.dt);
    chx_run->add_option("--theta", chx_args.cfg.theta);
    chx_run->add_option("--steps", chx_args.cfg.n_steps);
    chx_run->add_option("--snapshots", chx_args.cfg.snapshot_steps, "steps to record (default: last)")->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    chx_run->add_option("--resolution", chx_args.cfg.sim_resolution);
    chx_run->add_option("--threshold", chx_args.threshold, "binarisation threshold");
    chx_run->add_option("--prefix", chx_args.prefix, "pattern id prefix");
    chx_run->callback([&] { action = [&] { cmd_chx_run(chx_args, common); }; });

    int ref_runs = 250;
    auto* chx_ref = chx_cmd->add_subcommand("reference", "regenerate the bundled real-pattern set");
    add_common(chx_ref, common, "output directory");
    chx_ref->add_option("--runs", ref_runs, "number of runs (4 snapshots each)")->check(CLI::PositiveNumber);
    chx_ref->callback([&] { action = [&] { cmd_chx_reference(ref_runs, common); }; });

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "synthetic pattern generators");
    synth_cmd->require_subcommand(1);
    int n_pat = 100, grid = 8, order = 3;
    double fraction = -1.0, bern_p = -1.0;
    std::string reference;
    auto* proc = synth_cmd->add_subcommand("procedural", "spline-upsampled random grids");
    add_common(proc, common, "output directory");
    proc->add_option("--n", n_pat, "number of patterns")->check(CLI::NonNegativeNumber);
    proc->add_option("--grid", grid, "base grid size k (divides 64)");
    proc->add_option("--fraction", fraction, "target stiff fraction");
    proc->add_option("--order", order, "B-spline order");
    proc->add_option("--reference", reference, "pattern manifest to calibrate the fraction from");
    proc->callback([&] { action = [&] { cmd_synth_procedural(n_pat, grid, fraction, order, reference, common); }; });
    auto* bern = synth_cmd->add_subcommand("bernoulli", "independent cells");
    add_common(bern, common, "output directory");
    bern->add_option("--n", n_pat, "number of patterns")->check(CLI::NonNegativeNumber);
    bern->add_option("--p", bern_p, "stiff probability");
    bern->add_option("--reference", reference, "pattern manifest to calibrate p from");
    bern->callback([&] { action = [&] { cmd_synth_bernoulli(n_pat, bern_p, reference, common); }; });

    // simulate
    std::string sim_patterns, sim_fidelity = "low", sim_cache;
    bool sim_disp = false;
    auto* sim = app.add_subcommand("simulate", "equibiaxial FEA of a pattern set");
    add_common(sim, common, "output directory for sims.csv");
    sim->add_option("--patterns", sim_patterns, "pattern or dataset manifest")->required();
    sim->add_option("--fidelity", sim_fidelity, "low | high | profile.json");
    sim->add_option("--cache", sim_cache, "simulation cache directory");
    sim->add_flag("--displacements", sim_disp, "also write sampled displacement fields");
    sim->callback([&] { action = [&] { cmd_simulate(sim_patterns, sim_fidelity, sim_cache, sim_disp, common); }; });

    // dataset
    auto* ds_cmd = app.add_subcommand("dataset", "dataset assembly");
    ds_cmd->require_subcommand(1);
    DatasetArgs ds;
    auto* ds_build = ds_cmd->add_subcommand("build", "select, simulate and split a real + synthetic mix");
    add_common(ds_build, common, "dataset directory");
    ds_build->add_option("--real-pool", ds.real_pool, "pattern manifest of the real pool");
    ds_build->add_option("--n-real", ds.mix.n_real, "real train + val patterns");
    ds_build->add_option("--n-synth", ds.mix.n_synth);
    ds_build->add_option("--synth-source", ds.mix.synth_source, "procedural | bernoulli | pattern manifest");
    ds_build->add_flag("--rotations", ds.mix.rotations_enabled, "add 90/180/270 degree copies of train patterns");
    ds_build->add_option("--n-test-real", ds.mix.n_test_real);
    ds_build->add_option("--val-fraction", ds.mix.val_fraction);
    ds_build->add_option("--synth-fraction", ds.mix.synth_fraction, "stiff fraction of generated patterns (<0: calibrate)");
    ds_build->add_option("--procedural-grids", ds.mix.procedural_grids)->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    ds_build->add_option("--fidelity", ds.fidelity, "low | high | profile.json");
    ds_build->add_option("--cache", ds.cache, "simulation cache (default <out>/sim_cache)");
    ds_build->add_flag("--displacements", ds.displacements);
    ds_build->callback([&] { action = [&] { cmd_dataset_build(ds, common); }; });

    // train / transfer
    TrainArgs ta;
    auto add_train_opts = [&](CLI::App* s) {
        add_common(s, common, "output directory");
        s->add_option("--manifest", ta.manifest, "dataset manifest.csv")->required();
        s->add_option("--arch", ta.tc.arch, "desk3 | paper9");
        s->add_option("--epochs", ta.tc.epochs);
        s->add_option("--batch-size", ta.tc.batch_size);
        s->add_option("--lr", ta.tc.lr);
        s->add_option("--lr-after", ta.tc.lr_after);
        s->add_option("--lr-drop-epoch", ta.tc.lr_drop_epoch);
    };
    auto* tr = app.add_subcommand("train", "train the CNN surrogate");
    add_train_opts(tr);
    tr->add_option("--init", ta.init, "initial checkpoint");
    tr->callback([&] { action = [&] { cmd_train(ta, common); }; });
    auto* tf = app.add_subcommand("transfer", "fine-tune a pretrained checkpoint");
    add_train_opts(tf);
    tf->add_option("--pretrained,--init", ta.init, "pretrained checkpoint")->required();
    tf->add_flag("--compare-scratch", ta.compare_scratch, "also train from random init with the same seed");
    tf->callback([&] { action = [&] { cmd_transfer(ta, common); }; });

    // metrics
    auto* met = app.add_subcommand("metrics", "evaluation metrics");
    met->require_subcommand(1);
    std::string set_a, set_b, exp_dir, ckpt, eval_manifest;
    int n_boot = 50;
    auto* fr = met->add_subcommand("frechet", "descriptor Frechet distance between two pattern sets");
    add_common(fr, common, "optional JSON output file");
    fr->add_option("--set-a", set_a)->required();
    fr->add_option("--set-b", set_b)->required();
    fr->add_option("--boot", n_boot, "bootstrap replicates (0 disables)");
    fr->callback([&] { action = [&] { cmd_metrics_frechet(set_a, set_b, n_boot, common); }; });
    auto* rep = met->add_subcommand("report", "summarise an experiment directory");
    add_common(rep, common, "unused");
    rep->add_option("--experiment", exp_dir, "experiment output directory")->required();
    rep->callback([&] { action = [&] { cmd_metrics_report(exp_dir); }; });
    auto* ev = met->add_subcommand("evaluate", "score a checkpoint on a dataset's test split");
    add_common(ev, common, "unused");
    ev->add_option("--checkpoint", ckpt)->required();
    ev->add_option("--manifest", eval_manifest)->required();
    ev->callback([&] { action = [&] { cmd_metrics_evaluate(ckpt, eval_manifest); }; });

    // experiment
    auto* ex = app.add_subcommand("experiment", "staged experiment pipeline");
    ex->require_subcommand(1);
    bool dry = false;
    auto* ex_run = ex->add_subcommand("run", "run (or resume) an experiment config");
    add_common(ex_run, common, "override the output root");
    ex_run->add_flag("--dry-run", dry, "validate and print the stage plan only");
    ex_run->callback([&] { action = [&] { cmd_experiment_run(dry, common, ex_run); }; });

    try {
        std::vector<std::string> args(argv + 1, argv + argc);
        args = expand_config(std::move(args));
        std::reverse(args.begin(), args.end());
        app.parse(args);
        if (action) action();
        return 0;
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(ExitCode::config);
    } catch (const Error& e) {
        std::cerr << "hetmech: " << e.what() << "\n";
        return static_cast<int>(e.exit_code());
    } catch (const std::exception& e) {
        std::cerr << "hetmech: " << e.what() << "\n";
        return static_cast<int>(ExitCode::failure);
    }
}
