#pragma once

#include <algorithm>
#include <atomic>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hetmech/common/error.hpp"
#include "hetmech/common/hash.hpp"
#include "hetmech/common/io.hpp"
#include "hetmech/common/parallel.hpp"
#include "hetmech/common/rng.hpp"
#include "hetmech/dataset/sim_io.hpp"
#include "hetmech/fea/solver.hpp"
#include "hetmech/pattern/pattern_io.hpp"
#include "hetmech/synth/generators.hpp"

namespace hetmech::dataset {

enum class SplitTag { train, val, test };

inline std::string_view to_string(SplitTag t) {
    switch (t) {
        case SplitTag::train: return "train";
        case SplitTag::val: return "val";
        case SplitTag::test: return "test";
    }
    return "train";
}

inline SplitTag parse_split(std::string_view s) {
    if (s == "train") return SplitTag::train;
    if (s == "val") return SplitTag::val;
    if (s == "test") return SplitTag::test;
    throw FormatError("unknown split tag '" + std::string(s) + "'");
}

/// One manifest row. `rotation` is in quarter turns; the CSV stores degrees.
struct ManifestEntry {
    std::string pattern_id;
    std::string file_path;
    PatternSource source = PatternSource::external;
    int rotation = 0;
    std::string fidelity;
    SplitTag split = SplitTag::train;
    double delta_psi = 0.0;
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;
    nlohmann::json provenance = nlohmann::json::object();

    std::vector<const ManifestEntry*> select(SplitTag tag) const {
        std::vector<const ManifestEntry*> out;
        for (const auto& e : entries)
            if (e.split == tag) out.push_back(&e);
        return out;
    }
    std::size_t count(SplitTag tag) const { return select(tag).size(); }
};

inline std::string manifest_to_csv(const DatasetManifest& m) {
    CsvTable t;
    t.header = {"pattern_id", "file_path", "source", "rotation", "fidelity", "split_tag", "delta_psi"};
    for (const auto& e : m.entries)
        t.rows.push_back({e.pattern_id, e.file_path, std::string(to_string(e.source)), std::to_string(90 * e.rotation),
                          e.fidelity, std::string(to_string(e.split)), format_double(e.delta_psi)});
    return to_csv(t);
}

/// Throws LeakageError when a split rule is broken: duplicate (id, rotation),
/// one base id on two sides, or a synthetic pattern in a test split.
inline void validate_manifest(const DatasetManifest& m) {
    std::set<std::pair<std::string, int>> seen;
    std::map<std::string, SplitTag> side;
    for (const auto& e : m.entries) {
        if (e.rotation < 0 || e.rotation > 3) throw FormatError(e.pattern_id + ": rotation out of range");
        if (!seen.emplace(e.pattern_id, e.rotation).second)
            throw LeakageError("duplicate entry " + e.pattern_id + " rotation " + std::to_string(90 * e.rotation));
        auto [it, fresh] = side.emplace(e.pattern_id, e.split);
        if (!fresh && it->second != e.split)
            throw LeakageError(e.pattern_id + " appears in both " + std::string(to_string(it->second)) + " and " +
                               std::string(to_string(e.split)));
        if (e.split == SplitTag::test && !is_real_source(e.source))
            throw LeakageError(e.pattern_id + ": test split must hold real patterns only");
    }
}

inline DatasetManifest parse_manifest_csv(std::string_view text) {
    const auto t = parse_csv(text);
    const auto ci = t.column("pattern_id"), cf = t.column("file_path"), cs = t.column("source"),
               cr = t.column("rotation"), cd = t.column("fidelity"), ct = t.column("split_tag"),
               cl = t.column("delta_psi");
    DatasetManifest m;
    for (const auto& r : t.rows) {
        const auto deg = parse_int(r[cr]);
        if (deg % 90 != 0) throw FormatError("rotation must be a multiple of 90 degrees");
        m.entries.push_back({r[ci], r[cf], parse_source(r[cs]), static_cast<int>(deg / 90), r[cd], parse_split(r[ct]),
                             parse_double(r[cl])});
    }
    validate_manifest(m);
    return m;
}

/// `<dir>/manifest.csv` plus `<dir>/manifest.json` (provenance).
inline void write_manifest(const fs::path& dir, const DatasetManifest& m) {
    validate_manifest(m);
    write_file_atomic(dir / "manifest.json", m.provenance.dump(2) + "\n");
    write_file_atomic(dir / "manifest.csv", manifest_to_csv(m));
}

inline DatasetManifest read_manifest(const fs::path& csv_path) {
    DatasetManifest m = parse_manifest_csv(read_file(csv_path));
    fs::path side = csv_path;
    side.replace_extension(".json");
    if (fs::exists(side)) m.provenance = nlohmann::json::parse(read_file(side));
    return m;
}

/// Splits the non-test ids into k folds (contiguous after a seeded shuffle of
/// the unique base ids). Rotations follow their base id. Each result holds
/// train and val entries; test entries are dropped.
inline std::vector<DatasetManifest> kfold_split(const DatasetManifest& m, int k, std::uint64_t seed = 0) {
    if (k < 2) throw ArgumentError("k must be >= 2");
    std::vector<std::string> ids;
    std::set<std::string> seen;
    for (const auto& e : m.entries)
        if (e.split != SplitTag::test && seen.insert(e.pattern_id).second) ids.push_back(e.pattern_id);
    if (static_cast<std::size_t>(k) > ids.size())
        throw ArgumentError("k = " + std::to_string(k) + " exceeds the " + std::to_string(ids.size()) +
                            " unique pattern ids");
    Rng rng(seed);
    stable_shuffle(ids.begin(), ids.end(), rng);
    std::map<std::string, int> fold_of;
    const std::size_t n = ids.size();
    for (int f = 0; f < k; ++f) {
        const std::size_t lo = n * f / k, hi = n * (f + 1) / k;
        for (std::size_t i = lo; i < hi; ++i) fold_of[ids[i]] = f;
    }
    std::vector<DatasetManifest> out(k);
    for (int f = 0; f < k; ++f) {
        out[f].provenance = m.provenance;
        out[f].provenance["fold"] = f;
        out[f].provenance["k"] = k;
        for (const auto& e : m.entries) {
            if (e.split == SplitTag::test) continue;
            ManifestEntry c = e;
            c.split = fold_of.at(e.pattern_id) == f ? SplitTag::val : SplitTag::train;
            out[f].entries.push_back(std::move(c));
        }
    }
    return out;
}

/// How to assemble a dataset from the real pool and one synthetic source.
struct MixSpec {
    int n_real = 1000;        // real training + validation patterns
    int n_synth = 0;
    std::string synth_source = "procedural";  // procedural | bernoulli | path to a pattern manifest
    bool rotations_enabled = false;
    int n_test_real = 0;      // held-out real test patterns
    double val_fraction = 0.2;  // share of the real training ids used for validation
    std::vector<int> procedural_grids{4, 8, 16};
    int interp_order = 3;
    double synth_fraction = -1.0;  // < 0: calibrate from the real pool
    std::uint64_t seed = 0;

    void validate() const {
        if (n_real < 0) throw ConfigError("n_real", "must be >= 0");
        if (n_synth < 0) throw ConfigError("n_synth", "must be >= 0");
        if (n_real + n_synth <= 0) throw ConfigError("n_real", "n_real + n_synth must be > 0");
        if (n_test_real < 0) throw ConfigError("n_test_real", "must be >= 0");
        if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction", "must lie in [0, 1)");
        if (procedural_grids.empty()) throw ConfigError("procedural_grids", "must not be empty");
        for (int k : procedural_grids)
            if (k <= 0 || kPatternSide % k != 0) throw ConfigError("procedural_grids", "entries must divide 64");
        if (synth_fraction >= 1.0) throw ConfigError("synth_fraction", "must be < 1");
    }

    nlohmann::json to_json() const {
        return {{"n_real", n_real},
                {"n_synth", n_synth},
                {"synth_source", synth_source},
                {"rotations_enabled", rotations_enabled},
                {"n_test_real", n_test_real},
                {"val_fraction", val_fraction},
                {"procedural_grids", procedural_grids},
                {"interp_order", interp_order},
                {"synth_fraction", synth_fraction},
                {"seed", seed}};
    }

    static MixSpec from_json(const nlohmann::json& j) {
        MixSpec m;
        m.n_real = j.value("n_real", m.n_real);
        m.n_synth = j.value("n_synth", m.n_synth);
        m.synth_source = j.value("synth_source", m.synth_source);
        m.rotations_enabled = j.value("rotations_enabled", m.rotations_enabled);
        m.n_test_real = j.value("n_test_real", m.n_test_real);
        m.val_fraction = j.value("val_fraction", m.val_fraction);
        m.procedural_grids = j.value("procedural_grids", m.procedural_grids);
        m.interp_order = j.value("interp_order", m.interp_order);
        m.synth_fraction = j.value("synth_fraction", m.synth_fraction);
        m.seed = j.value("seed", m.seed);
        m.validate();
        return m;
    }
};

/// A pool of candidate patterns with ids.
struct PatternPool {
    std::string name;
    std::vector<Pattern> patterns;
    std::vector<std::string> ids;

    std::uint64_t content_hash() const {
        Fnv1a h;
        for (std::size_t i = 0; i < patterns.size(); ++i) {
            h.update(ids[i]);
            h.update_u64(patterns[i].content_hash());
        }
        return h.digest();
    }
};

inline PatternPool load_pool(const fs::path& manifest_path, std::string name) {
    PatternPool pool;
    pool.name = std::move(name);
    std::vector<PatternEntry> entries;
    pool.patterns = load_pattern_set(manifest_path, &entries);
    for (const auto& e : entries) pool.ids.push_back(e.pattern_id);
    return pool;
}

/// Deterministic synthetic patterns for a mix. Procedural patterns cycle
/// through the configured base grids.
inline std::vector<Pattern> generate_synthetic(const MixSpec& mix, double fraction) {
    std::vector<Pattern> out;
    out.reserve(static_cast<std::size_t>(mix.n_synth));
    const std::uint64_t base = mix_seed(mix.seed, Fnv1a{}.update(mix.synth_source).digest());
    for (int i = 0; i < mix.n_synth; ++i) {
        const std::uint64_t s = mix_seed(base, static_cast<std::uint64_t>(i));
        if (mix.synth_source == "procedural") {
            synth::ProceduralConfig cfg;
            cfg.base_grid = mix.procedural_grids[static_cast<std::size_t>(i) % mix.procedural_grids.size()];
            cfg.target_fraction = fraction;
            cfg.interp_order = mix.interp_order;
            cfg.seed = s;
            out.push_back(synth::procedural_pattern(cfg));
        } else if (mix.synth_source == "bernoulli") {
            out.push_back(synth::bernoulli_pattern({fraction, s}));
        } else {
            throw ConfigError("synth_source", "unknown generator '" + mix.synth_source + "'");
        }
    }
    return out;
}

struct BuildOptions {
    fs::path out_dir;        // manifest, patterns/ and sims.csv go here
    fs::path cache_dir;      // simulation cache; empty disables caching
    std::size_t jobs = 1;
    bool write_displacements = false;
    std::function<void(const std::string&)> log;
};

struct BuildResult {
    DatasetManifest manifest;
    std::vector<fea::SimRecord> records;  // one per unique pattern, manifest order
    std::size_t n_solved = 0;
    std::size_t n_cached = 0;
};

/// Simulates `patterns` (ids in `ids`), consulting and filling the cache.
inline std::vector<fea::SimRecord> simulate_batch(const std::vector<Pattern>& patterns,
                                                  const std::vector<std::string>& ids,
                                                  const fea::FidelityProfile& profile, const BuildOptions& opt,
                                                  std::size_t* n_solved = nullptr, std::size_t* n_cached = nullptr) {
    std::vector<fea::SimRecord> out(patterns.size());
    std::optional<SimCache> cache;
    if (!opt.cache_dir.empty()) cache.emplace(opt.cache_dir);
    std::atomic<std::size_t> solved{0}, cached{0}, done{0};
    parallel_for(patterns.size(), opt.jobs, [&](std::size_t i) {
        if (cache) {
            if (auto rec = cache->load(patterns[i], profile, ids[i], opt.write_displacements)) {
                out[i] = std::move(*rec);
                ++cached;
                return;
            }
        }
        auto rec = fea::simulate_pattern(patterns[i], profile, ids[i]);
        if (cache) cache->store(patterns[i], profile, rec);
        out[i] = std::move(rec);
        ++solved;
        const std::size_t k = ++done;
        if (opt.log && k % 100 == 0) opt.log("simulated " + std::to_string(k) + " patterns");
    });
    if (n_solved) *n_solved = solved;
    if (n_cached) *n_cached = cached;
    return out;
}

/// Selects real and synthetic patterns, simulates them, and writes a
/// self-contained dataset directory. Real ids are drawn by a seeded shuffle:
/// the first n_test_real become the test split, the next n_real the training
/// pool, whose first val_fraction share is held out for validation. Rotations
/// (when enabled) apply to the train split only.
inline BuildResult build_mixed_dataset(const MixSpec& mix, const fea::FidelityProfile& profile,
                                       const PatternPool& real_pool, const BuildOptions& opt,
                                       const PatternPool* synth_pool = nullptr) {
    mix.validate();
    profile.validate();
    const std::size_t need_real = static_cast<std::size_t>(mix.n_real) + static_cast<std::size_t>(mix.n_test_real);
    if (need_real > real_pool.patterns.size()) throw CapacityError(real_pool.name, need_real, real_pool.patterns.size());

    std::vector<std::size_t> order(real_pool.patterns.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(mix_seed(mix.seed, 0x7265616cULL));
    stable_shuffle(order.begin(), order.end(), rng);

    std::vector<Pattern> pats;
    std::vector<std::string> ids;
    std::vector<SplitTag> tags;
    const std::size_t n_test = static_cast<std::size_t>(mix.n_test_real);
    const std::size_t n_val = static_cast<std::size_t>(mix.val_fraction * mix.n_real + 0.5);
    for (std::size_t i = 0; i < need_real; ++i) {
        const std::size_t src = order[i];
        pats.push_back(real_pool.patterns[src]);
        pats.back().source = PatternSource::cahn_hilliard;
        ids.push_back(real_pool.ids[src]);
        tags.push_back(i < n_test ? SplitTag::test : (i < n_test + n_val ? SplitTag::val : SplitTag::train));
    }

    double fraction = mix.synth_fraction;
    if (mix.n_synth > 0 && fraction < 0.0) fraction = synth::calibrate_fraction(real_pool.patterns);
    std::vector<Pattern> synth;
    std::vector<std::string> synth_ids;
    if (synth_pool) {
        if (static_cast<std::size_t>(mix.n_synth) > synth_pool->patterns.size())
            throw CapacityError(synth_pool->name, static_cast<std::size_t>(mix.n_synth), synth_pool->patterns.size());
        for (int i = 0; i < mix.n_synth; ++i) {
            synth.push_back(synth_pool->patterns[i]);
            synth_ids.push_back(synth_pool->ids[i]);
        }
    } else {
        synth = generate_synthetic(mix, fraction);
        const std::string prefix = mix.synth_source == "procedural" ? "proc" : "bern";
        for (int i = 0; i < mix.n_synth; ++i) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%s%06d", prefix.c_str(), i);
            synth_ids.emplace_back(buf);
        }
    }
    for (std::size_t i = 0; i < synth.size(); ++i) {
        if (is_real_source(synth[i].source))
            throw ConfigError("synth_source", "synthetic pool contains real pattern " + synth_ids[i]);
        pats.push_back(synth[i]);
        ids.push_back(synth_ids[i]);
        tags.push_back(SplitTag::train);
    }

    BuildResult res;
    if (opt.log)
        opt.log("dataset: " + std::to_string(pats.size()) + " unique patterns at fidelity " + profile.name);
    res.records = simulate_batch(pats, ids, profile, opt, &res.n_solved, &res.n_cached);

    auto& m = res.manifest;
    for (std::size_t i = 0; i < pats.size(); ++i) {
        const std::string file = "patterns/" + ids[i] + ".pbm";
        const int n_rot = (mix.rotations_enabled && tags[i] == SplitTag::train) ? 4 : 1;
        for (int r = 0; r < n_rot; ++r)
            m.entries.push_back({ids[i], file, pats[i].source, r, profile.name, tags[i], res.records[i].final_delta_psi()});
    }
    m.provenance = {{"mix", mix.to_json()},
                    {"fidelity", profile.to_json()},
                    {"real_pool", hex64(real_pool.content_hash())},
                    {"synth_pool", synth_pool ? hex64(synth_pool->content_hash()) : std::string("generated")},
                    {"synth_fraction", fraction},
                    {"seed", mix.seed}};
    m.provenance["config_hash"] = hash_hex(m.provenance.dump());
    validate_manifest(m);

    if (!opt.out_dir.empty()) {
        for (std::size_t i = 0; i < pats.size(); ++i) {
            PatternMeta meta{pats[i].source, pats[i].seed_or_id.empty() ? ids[i] : pats[i].seed_or_id, std::nullopt,
                             std::nullopt};
            write_pattern(opt.out_dir / "patterns" / (ids[i] + ".pbm"), pats[i], meta);
            if (opt.write_displacements)
                write_file_atomic(opt.out_dir / "displacements" / (ids[i] + ".disp"),
                                  encode_displacement(res.records[i].displacement_field));
        }
        write_file_atomic(opt.out_dir / "sims.csv", sim_records_to_csv(res.records));
        write_manifest(opt.out_dir, m);
    }
    return res;
}

/// Patterns and labels of one split, with rotations applied.
struct LabeledSet {
    std::vector<Pattern> x;
    std::vector<double> y;
    std::vector<std::string> ids;
    std::vector<int> rotations;

    std::size_t size() const { return x.size(); }
};

/// Loads the entries tagged `tag`; file paths resolve relative to `manifest_dir`.
inline LabeledSet load_split(const DatasetManifest& m, SplitTag tag, const fs::path& manifest_dir) {
    LabeledSet s;
    std::map<std::string, Pattern> cache;
    for (const auto* e : m.select(tag)) {
        auto it = cache.find(e->file_path);
        if (it == cache.end()) {
            fs::path p(e->file_path);
            if (!p.is_absolute()) p = manifest_dir / p;
            it = cache.emplace(e->file_path, decode_pbm(read_file(p))).first;
        }
        Pattern pat = rotate_pattern(it->second, e->rotation);
        pat.source = e->source;
        pat.seed_or_id = e->pattern_id;
        s.x.push_back(std::move(pat));
        s.y.push_back(e->delta_psi);
        s.ids.push_back(e->pattern_id);
        s.rotations.push_back(e->rotation);
    }
    return s;
}

}  // namespace hetmech::dataset
