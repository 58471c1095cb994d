#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hetmech/common/error.hpp"
#include "hetmech/common/hash.hpp"
#include "hetmech/common/io.hpp"
#include "hetmech/dataset/forge.hpp"
#include "hetmech/fea/mesh.hpp"
#include "hetmech/metrics/metrics.hpp"
#include "hetmech/nn/trainer.hpp"

#ifndef HETMECH_VERSION
#define HETMECH_VERSION "0.1.0"
#endif

namespace hetmech::experiment {

inline std::string version() { return HETMECH_VERSION; }

struct NamedMix {
    std::string name;
    dataset::MixSpec mix;
};

/// Pretrain on low-fidelity real + synthetic data, then fine-tune on the same
/// real ids simulated at `finetune_fidelity`, next to a random-init baseline.
struct TransferSpec {
    bool enabled = false;
    dataset::MixSpec pretrain;
    fea::FidelityProfile finetune_fidelity = fea::high_fidelity();
    nn::TrainConfig pretrain_train;
    nn::TrainConfig finetune_train;
};

struct ExperimentConfig {
    std::string name = "experiment";
    std::uint64_t seed = 0;                 // data selection and synthetic generation
    std::vector<std::uint64_t> replicates{0};  // training seeds
    fs::path out = "runs/experiment";
    std::size_t jobs = 1;
    fs::path real_pool = "data/reference/manifest.csv";
    fs::path cache_dir;                     // empty: <out>/sim_cache
    fea::FidelityProfile fidelity = fea::low_fidelity();
    int n_test_real = 200;
    nn::TrainConfig train;
    std::vector<NamedMix> mixes;
    TransferSpec transfer;
    int histogram_bins = 20;

    fs::path effective_cache() const { return cache_dir.empty() ? out / "sim_cache" : cache_dir; }

    /// Canonical JSON: keys sorted, so the hash ignores key order in the file.
    /// `out`, `jobs` and `cache_dir` are execution details and not hashed.
    nlohmann::json canonical() const {
        nlohmann::json mixes_j = nlohmann::json::array();
        for (const auto& m : mixes) {
            auto j = m.mix.to_json();
            j["name"] = m.name;
            mixes_j.push_back(j);
        }
        nlohmann::json j = {{"name", name},
                            {"seed", seed},
                            {"replicates", replicates},
                            {"real_pool", real_pool.generic_string()},
                            {"fidelity", fidelity.to_json()},
                            {"n_test_real", n_test_real},
                            {"train", train.to_json()},
                            {"mixes", mixes_j},
                            {"histogram_bins", histogram_bins}};
        if (transfer.enabled)
            j["transfer"] = {{"pretrain", transfer.pretrain.to_json()},
                             {"finetune_fidelity", transfer.finetune_fidelity.to_json()},
                             {"pretrain_train", transfer.pretrain_train.to_json()},
                             {"finetune_train", transfer.finetune_train.to_json()}};
        return j;
    }

    std::string hash() const { return hash_hex(canonical().dump()); }

    void validate() const {
        if (name.empty()) throw ConfigError("name", "must not be empty");
        if (replicates.empty()) throw ConfigError("replicates", "needs at least one training seed");
        if (jobs < 1) throw ConfigError("jobs", "must be >= 1");
        if (n_test_real < 1) throw ConfigError("n_test_real", "must be >= 1");
        if (histogram_bins < 1) throw ConfigError("histogram_bins", "must be >= 1");
        if (mixes.empty() && !transfer.enabled) throw ConfigError("mixes", "nothing to run: no mixes and no transfer");
        if (!fs::exists(real_pool)) throw ConfigError("real_pool", "no such file: " + real_pool.string());
        std::set<std::string> names;
        for (const auto& m : mixes) {
            if (m.name.empty() || m.name.find('/') != std::string::npos)
                throw ConfigError("mixes", "mix names must be non-empty and contain no '/'");
            if (!names.insert(m.name).second) throw ConfigError("mixes", "duplicate mix name '" + m.name + "'");
            m.mix.validate();
        }
        fidelity.validate();
        train.validate();
        if (transfer.enabled) {
            transfer.pretrain.validate();
            transfer.finetune_fidelity.validate();
            transfer.pretrain_train.validate();
            transfer.finetune_train.validate();
        }
    }
};

namespace detail {

inline fea::FidelityProfile fidelity_from(const nlohmann::json& j) {
    return j.is_string() ? fea::fidelity_by_name(j.get<std::string>()) : fea::FidelityProfile::from_json(j);
}

inline fs::path resolve(const fs::path& base, const std::string& p) {
    fs::path q(p);
    return q.is_absolute() || base.empty() ? q : base / q;
}

}  // namespace detail

/// Parses a config; relative paths resolve against `base_dir`.
inline ExperimentConfig config_from_json(const nlohmann::json& j, const fs::path& base_dir = {}) {
    static const std::set<std::string> known{"name", "seed", "replicates", "out", "jobs", "real_pool", "cache_dir",
                                             "fidelity", "n_test_real", "train", "mixes", "transfer",
                                             "histogram_bins"};
    ExperimentConfig c;
    try {
        if (!j.is_object()) throw ConfigError("<root>", "config must be an object");
        for (const auto& [k, _] : j.items())
            if (!known.count(k)) throw ConfigError(k, "unknown key");
        c.name = j.value("name", c.name);
        c.seed = j.value("seed", c.seed);
        c.replicates = j.value("replicates", c.replicates);
        c.out = detail::resolve(base_dir, j.value("out", std::string("runs/") + c.name));
        c.jobs = j.value("jobs", c.jobs);
        c.real_pool = detail::resolve(base_dir, j.value("real_pool", c.real_pool.string()));
        if (j.contains("cache_dir")) c.cache_dir = detail::resolve(base_dir, j.at("cache_dir").get<std::string>());
        if (j.contains("fidelity")) c.fidelity = detail::fidelity_from(j.at("fidelity"));
        c.n_test_real = j.value("n_test_real", c.n_test_real);
        if (j.contains("train")) c.train = nn::TrainConfig::from_json(j.at("train"));
        c.histogram_bins = j.value("histogram_bins", c.histogram_bins);
        auto mix_of = [&](nlohmann::json m) {
            if (m.contains("seed") || m.contains("n_test_real"))
                throw ConfigError("mixes", "seed and n_test_real are set at the top level only");
            m.erase("name");
            auto spec = dataset::MixSpec::from_json(m);
            spec.seed = c.seed;
            spec.n_test_real = c.n_test_real;
            return spec;
        };
        for (const auto& m : j.value("mixes", nlohmann::json::array()))
            c.mixes.push_back({m.at("name").get<std::string>(), mix_of(m)});
        if (j.contains("transfer")) {
            const auto& t = j.at("transfer");
            c.transfer.enabled = t.value("enabled", true);
            c.transfer.pretrain = mix_of(t.at("pretrain"));
            if (t.contains("finetune_fidelity")) c.transfer.finetune_fidelity = detail::fidelity_from(t.at("finetune_fidelity"));
            auto merged = [&](const char* key) {
                nlohmann::json base = c.train.to_json();
                if (t.contains(key)) base.update(t.at(key));
                return nn::TrainConfig::from_json(base);
            };
            c.transfer.pretrain_train = merged("pretrain_train");
            c.transfer.finetune_train = merged("finetune_train");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("<json>", e.what());
    }
    c.validate();
    return c;
}

inline ExperimentConfig load_config(const fs::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path), nullptr, true, true);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string(), std::string("not valid JSON: ") + e.what());
    }
    return config_from_json(j, path.parent_path());
}

/// One node of the stage DAG.
struct Stage {
    std::string name;                 // e.g. dataset/real200, train/real200/s1
    std::string hash;
    std::vector<std::string> depends;
    fs::path dir;
    bool cached = false;
};

inline bool stage_done(const fs::path& dir, const std::string& hash) {
    const auto f = dir / "stage.json";
    if (!fs::exists(f)) return false;
    try {
        return nlohmann::json::parse(read_file(f)).value("hash", std::string()) == hash;
    } catch (const nlohmann::json::exception&) {
        return false;
    }
}

inline nlohmann::json stage_record(const fs::path& dir) { return nlohmann::json::parse(read_file(dir / "stage.json")); }

inline void mark_stage(const fs::path& dir, const std::string& hash, nlohmann::json extra = nlohmann::json::object()) {
    extra["hash"] = hash;
    write_file_atomic(dir / "stage.json", extra.dump(2) + "\n");
}

/// Build version, config hash and real-pool hash.
inline std::string version_and_provenance(const ExperimentConfig& c) {
    const auto pool = dataset::load_pool(c.real_pool, "real");
    return "hetmech " + version() + "\nconfig_hash " + c.hash() + "\nreal_pool " + hex64(pool.content_hash()) + " (" +
           std::to_string(pool.patterns.size()) + " patterns)\n";
}

namespace detail {

inline std::string seed_tag(std::uint64_t s) { return "s" + std::to_string(s); }

struct Plan {
    std::vector<Stage> stages;
    std::map<std::string, std::size_t> index;

    Stage& add(Stage s) {
        index[s.name] = stages.size();
        stages.push_back(std::move(s));
        return stages.back();
    }
    const Stage& at(const std::string& n) const { return stages.at(index.at(n)); }
};

inline std::string dataset_hash(const dataset::MixSpec& mix, const fea::FidelityProfile& prof, const std::string& pool_hash) {
    return hash_hex(nlohmann::json({{"mix", mix.to_json()}, {"fidelity", prof.to_json()}, {"pool", pool_hash}}).dump());
}

inline std::string train_hash(const std::string& data_hash, const nn::TrainConfig& tc, const std::string& init_hash) {
    return hash_hex(nlohmann::json({{"data", data_hash}, {"train", tc.to_json()}, {"init", init_hash}}).dump());
}

inline nn::TrainConfig with_seed(nn::TrainConfig t, std::uint64_t s) {
    t.seed = s;
    return t;
}

inline Plan make_plan(const ExperimentConfig& c, const std::string& pool_hash) {
    Plan p;
    auto add_dataset = [&](const std::string& name, const dataset::MixSpec& mix, const fea::FidelityProfile& prof) {
        Stage s{"dataset/" + name, dataset_hash(mix, prof, pool_hash), {}, c.out / "datasets" / name};
        s.cached = stage_done(s.dir, s.hash);
        p.add(s);
    };
    auto add_train = [&](const std::string& name, const std::string& data, const nn::TrainConfig& tc,
                         const std::string& init) {
        const std::string init_hash = init.empty() ? std::string("random") : p.at(init).hash;
        Stage s{"train/" + name, train_hash(p.at(data).hash, tc, init_hash), {data}, c.out / "models" / name};
        if (!init.empty()) s.depends.push_back(init);
        s.cached = stage_done(s.dir, s.hash);
        p.add(s);
    };
    for (const auto& m : c.mixes) {
        add_dataset(m.name, m.mix, c.fidelity);
        for (auto seed : c.replicates)
            add_train(m.name + "/" + seed_tag(seed), "dataset/" + m.name, with_seed(c.train, seed), "");
    }
    if (c.transfer.enabled) {
        const auto& t = c.transfer;
        add_dataset("transfer_pretrain", t.pretrain, c.fidelity);
        dataset::MixSpec ft = t.pretrain;
        ft.n_synth = 0;
        ft.rotations_enabled = false;
        add_dataset("transfer_finetune", ft, t.finetune_fidelity);
        for (auto seed : c.replicates) {
            const auto tag = seed_tag(seed);
            add_train("pretrain/" + tag, "dataset/transfer_pretrain", with_seed(t.pretrain_train, seed), "");
            add_train("finetune/" + tag, "dataset/transfer_finetune", with_seed(t.finetune_train, seed),
                      "train/pretrain/" + tag);
            add_train("scratch/" + tag, "dataset/transfer_finetune", with_seed(t.finetune_train, seed), "");
        }
    }
    return p;
}

inline double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace detail

struct RunOptions {
    bool dry_run = false;
    std::function<void(const std::string&)> log;
};

struct RunResult {
    nlohmann::json report;            // MetricsReport
    std::vector<Stage> plan;
    std::size_t stages_run = 0;
    std::size_t simulations = 0;
    std::size_t epochs = 0;
};

/// Text rendering of the stage DAG.
inline std::string describe_plan(const std::vector<Stage>& plan) {
    std::string out;
    for (const auto& s : plan) {
        out += (s.cached ? "[cached] " : "[run]    ") + s.name + "  " + s.hash;
        if (!s.depends.empty()) {
            out += "  <- ";
            for (std::size_t i = 0; i < s.depends.size(); ++i) out += (i ? ", " : "") + s.depends[i];
        }
        out += "\n";
    }
    return out;
}

/// Runs every stage of the plan (skipping those whose outputs are current)
/// and writes metrics_report.json plus CSV tables under config.out.
inline RunResult run_experiment(const ExperimentConfig& c, const RunOptions& opt = {}) {
    c.validate();
    const std::string chash = c.hash();
    auto log = [&](const std::string& m) {
        if (opt.log) opt.log(m);
    };
    const auto pool = dataset::load_pool(c.real_pool, "real");
    const std::string pool_hash = hex64(pool.content_hash());
    auto plan = detail::make_plan(c, pool_hash);
    RunResult res;
    res.plan = plan.stages;
    if (opt.dry_run) return res;

    auto guarded = [&](const Stage& s, const std::function<void()>& body) {
        try {
            body();
        } catch (const StageError&) {
            throw;
        } catch (const Error& e) {
            throw StageError(s.name, chash, s.dir.string(), e);
        }
    };

    // Datasets.
    std::map<std::string, dataset::DatasetManifest> manifests;
    auto build = [&](const std::string& name, const dataset::MixSpec& mix, const fea::FidelityProfile& prof) {
        const auto& s = plan.at("dataset/" + name);
        guarded(s, [&] {
            if (!s.cached) {
                log("stage " + s.name);
                dataset::BuildOptions bo;
                bo.out_dir = s.dir;
                bo.cache_dir = c.effective_cache();
                bo.jobs = c.jobs;
                bo.log = opt.log;
                const auto r = dataset::build_mixed_dataset(mix, prof, pool, bo);
                res.simulations += r.n_solved;
                mark_stage(s.dir, s.hash, {{"n_solved", r.n_solved}, {"n_cached", r.n_cached}});
                ++res.stages_run;
            }
            manifests[name] = dataset::read_manifest(s.dir / "manifest.csv");
        });
    };
    for (const auto& m : c.mixes) build(m.name, m.mix, c.fidelity);
    if (c.transfer.enabled) {
        build("transfer_pretrain", c.transfer.pretrain, c.fidelity);
        dataset::MixSpec ft = c.transfer.pretrain;
        ft.n_synth = 0;
        ft.rotations_enabled = false;
        build("transfer_finetune", ft, c.transfer.finetune_fidelity);
    }

    // Training and evaluation. Each train stage records its test scores.
    auto train = [&](const std::string& name, const std::string& ds, const nn::TrainConfig& tc,
                     const std::string& init) -> nlohmann::json {
        const auto& s = plan.at("train/" + name);
        nlohmann::json rec;
        guarded(s, [&] {
            if (!s.cached) {
                log("stage " + s.name);
                const auto dir = plan.at("dataset/" + ds).dir;
                const auto& m = manifests.at(ds);
                const auto tr = dataset::load_split(m, dataset::SplitTag::train, dir);
                const auto va = dataset::load_split(m, dataset::SplitTag::val, dir);
                const auto te = dataset::load_split(m, dataset::SplitTag::test, dir);
                std::optional<nn::Checkpoint> init_ck;
                if (!init.empty()) init_ck = nn::load_checkpoint(plan.at(init).dir / "best.ckpt");
                auto r = nn::train_model(tc, tr, va.size() ? &va : nullptr, init_ck ? &*init_ck : nullptr);
                res.epochs += r.history.size();
                r.best.provenance["label"] = s.name;
                r.best.provenance["dataset_hash"] = m.provenance.value("config_hash", std::string());
                r.last.provenance = r.best.provenance;
                nn::save_checkpoint(s.dir / "best.ckpt", r.best);
                nn::save_checkpoint(s.dir / "last.ckpt", r.last);
                write_file_atomic(s.dir / "history.csv", to_csv(nn::history_table(r.history)));
                const auto ev = nn::evaluate(r.best, te);
                mark_stage(s.dir, s.hash,
                           {{"r2", ev.score.r2},
                            {"mae", ev.score.mae},
                            {"n_test", ev.n},
                            {"rotation_spread", ev.rotation_spread},
                            {"best_epoch", r.best_epoch},
                            {"epochs", r.history.size()}});
                ++res.stages_run;
            }
            rec = stage_record(s.dir);
            rec.erase("hash");
        });
        return rec;
    };

    nlohmann::json report = {{"experiment", c.name},
                             {"version", version()},
                             {"config_hash", chash},
                             {"real_pool_hash", pool_hash}};
    nlohmann::json mixes_j = nlohmann::json::array();
    CsvTable mix_table;
    mix_table.header = {"mix", "synth_source", "n_real", "n_synth", "n_train_rows", "seed", "r2", "mae"};
    for (const auto& m : c.mixes) {
        std::vector<double> r2s, maes;
        nlohmann::json reps = nlohmann::json::array();
        const auto n_rows = manifests.at(m.name).count(dataset::SplitTag::train);
        for (auto seed : c.replicates) {
            auto rec = train(m.name + "/" + detail::seed_tag(seed), m.name, detail::with_seed(c.train, seed), "");
            rec["seed"] = seed;
            r2s.push_back(rec.at("r2").get<double>());
            maes.push_back(rec.at("mae").get<double>());
            mix_table.rows.push_back({m.name, m.mix.n_synth ? m.mix.synth_source : "none", std::to_string(m.mix.n_real),
                                      std::to_string(m.mix.n_synth), std::to_string(n_rows), std::to_string(seed),
                                      format_double(r2s.back()), format_double(maes.back())});
            reps.push_back(rec);
        }
        mixes_j.push_back({{"name", m.name},
                           {"synth_source", m.mix.n_synth ? m.mix.synth_source : "none"},
                           {"n_real", m.mix.n_real},
                           {"n_synth", m.mix.n_synth},
                           {"n_train_rows", n_rows},
                           {"dataset_hash", manifests.at(m.name).provenance.value("config_hash", std::string())},
                           {"replicates", reps},
                           {"median_r2", detail::median(r2s)},
                           {"median_mae", detail::median(maes)}});
    }
    report["mixes"] = mixes_j;

    if (c.transfer.enabled) {
        const auto& t = c.transfer;
        nlohmann::json reps = nlohmann::json::array();
        std::vector<double> reductions;
        CsvTable tt;
        tt.header = {"seed", "pretrain_r2", "finetune_r2", "finetune_mae", "scratch_r2", "scratch_mae", "mae_reduction"};
        for (auto seed : c.replicates) {
            const auto tag = detail::seed_tag(seed);
            const auto pre = train("pretrain/" + tag, "transfer_pretrain", detail::with_seed(t.pretrain_train, seed), "");
            const auto fin = train("finetune/" + tag, "transfer_finetune", detail::with_seed(t.finetune_train, seed),
                                   "train/pretrain/" + tag);
            const auto scr = train("scratch/" + tag, "transfer_finetune", detail::with_seed(t.finetune_train, seed), "");
            const double red = 1.0 - fin.at("mae").get<double>() / scr.at("mae").get<double>();
            reductions.push_back(red);
            reps.push_back({{"seed", seed},
                            {"pretrain", pre},
                            {"finetune", fin},
                            {"scratch", scr},
                            {"mae_reduction", red}});
            tt.rows.push_back({std::to_string(seed), format_double(pre.at("r2").get<double>()),
                               format_double(fin.at("r2").get<double>()), format_double(fin.at("mae").get<double>()),
                               format_double(scr.at("r2").get<double>()), format_double(scr.at("mae").get<double>()),
                               format_double(red)});
        }
        report["transfer"] = {{"replicates", reps}, {"median_mae_reduction", detail::median(reductions)}};
        write_file_atomic(c.out / "transfer.csv", to_csv(tt));
    }

    // Label distributions by source (unique patterns, one value each).
    std::map<std::string, std::vector<double>> by_source;
    std::set<std::string> seen;
    for (const auto& [name, m] : manifests) {
        if (name == "transfer_finetune") continue;
        for (const auto& e : m.entries)
            if (e.rotation == 0 && seen.insert(e.pattern_id).second)
                by_source[std::string(to_string(e.source))].push_back(e.delta_psi);
    }
    if (!by_source.empty()) {
        const auto h = metrics::histogram_report(by_source, c.histogram_bins);
        write_file_atomic(c.out / "delta_psi_histogram.csv", to_csv(h.to_table()));
        nlohmann::json overlap = nlohmann::json::object();
        const std::string real(to_string(PatternSource::cahn_hilliard));
        if (h.percent.count(real))
            for (const auto& [src, _] : h.percent)
                if (src != real) overlap[src] = metrics::overlap_coefficient(h, real, src);
        report["histogram"] = {{"bins", c.histogram_bins}, {"overlap_with_real", overlap}};
    }

    write_file_atomic(c.out / "mix_summary.csv", to_csv(mix_table));
    write_file_atomic(c.out / "metrics_report.json", report.dump(2) + "\n");
    write_file_atomic(c.out / "config.json", c.canonical().dump(2) + "\n");
    res.report = std::move(report);
    return res;
}

}  // namespace hetmech::experiment
