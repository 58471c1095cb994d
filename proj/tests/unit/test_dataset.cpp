#include <gtest/gtest.h>

#include <set>

#include "hetmech/dataset/forge.hpp"
#include "test_util.hpp"

using namespace hetmech;
using namespace hetmech::dataset;
using test_support::TempDir;

namespace {

PatternPool fake_real_pool(int n) {
    PatternPool pool;
    pool.name = "fake";
    for (int i = 0; i < n; ++i) {
        auto p = test_support::random_pattern(100 + i, 0.6);
        p.source = PatternSource::cahn_hilliard;
        pool.patterns.push_back(p);
        pool.ids.push_back("r" + std::to_string(i));
    }
    return pool;
}

DatasetManifest id_manifest(int n) {
    DatasetManifest m;
    for (int i = 0; i < n; ++i)
        m.entries.push_back({"p" + std::to_string(i), "patterns/p.pbm", PatternSource::cahn_hilliard, 0, "low",
                             SplitTag::train, 0.0});
    return m;
}

}  // namespace

TEST(SimIo, DisplacementRoundTripIsBitExact) {
    std::vector<double> f(kDisplacementValues);
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = std::sin(0.37 * i) * 1e-3;
    const auto bytes = encode_displacement(f);
    EXPECT_EQ(bytes.substr(0, 8), "HMDISP01");
    EXPECT_EQ(decode_displacement(bytes), f);
    EXPECT_THROW(decode_displacement(bytes.substr(0, 100)), FormatError);
    EXPECT_THROW(decode_displacement("XXXXXXXX" + bytes.substr(8)), FormatError);
    EXPECT_THROW(encode_displacement({1.0}), FormatError);
}

TEST(SimIo, CsvRoundTrip) {
    fea::SimRecord r;
    r.pattern_id = "a";
    r.fidelity = "high";
    r.delta_psi = {{0.0, 0.0}, {0.1, 0.25}, {0.2, 1.125}};
    r.reaction_fx = {0.0, 1.5, 3.25};
    r.reaction_fy = {0.0, -1.5, 2.0};
    auto r2 = r;
    r2.pattern_id = "b";
    const auto back = parse_sim_records(sim_records_to_csv({r, r2}));
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[1].pattern_id, "b");
    EXPECT_EQ(back[0].delta_psi, r.delta_psi);
    EXPECT_EQ(back[0].reaction_fx, r.reaction_fx);
    EXPECT_EQ(back[0].reaction_fy, r.reaction_fy);
}

TEST(SimIo, RejectsUnorderedRows) {
    EXPECT_THROW(parse_sim_records("pattern_id,fidelity,d,delta_psi,fx,fy\na,low,0.1,1,0,0\na,low,0.05,1,0,0\n"),
                 FormatError);
}

TEST(SimIo, ValidateRecord) {
    fea::SimRecord r;
    r.pattern_id = "a";
    r.delta_psi = {{0.0, 0.0}, {0.1, 0.5}};
    r.reaction_fx = {0, 0};
    r.reaction_fy = {0, 0};
    EXPECT_NO_THROW(validate_sim_record(r));
    r.delta_psi[1].second = -0.1;
    EXPECT_THROW(validate_sim_record(r), FormatError);
    r.delta_psi = {{0.0, 1e-3}, {0.1, 0.5}};
    EXPECT_THROW(validate_sim_record(r), FormatError);
}

TEST(Manifest, RoundTripThroughCsv) {
    DatasetManifest m;
    m.entries = {{"ch00001", "patterns/ch00001.pbm", PatternSource::cahn_hilliard, 0, "low", SplitTag::test, 0.125},
                 {"proc000001", "patterns/proc000001.pbm", PatternSource::procedural, 3, "low", SplitTag::train, 1.5}};
    const auto csv = manifest_to_csv(m);
    EXPECT_NE(csv.find("270"), std::string::npos);
    const auto back = parse_manifest_csv(csv);
    ASSERT_EQ(back.entries.size(), 2u);
    EXPECT_EQ(back.entries[1].rotation, 3);
    EXPECT_EQ(back.entries[1].source, PatternSource::procedural);
    EXPECT_EQ(back.entries[0].split, SplitTag::test);
    EXPECT_DOUBLE_EQ(back.entries[0].delta_psi, 0.125);
    EXPECT_EQ(manifest_to_csv(back), csv);
}

TEST(Manifest, LeakageRules) {
    DatasetManifest m;
    m.entries = {{"a", "f", PatternSource::cahn_hilliard, 0, "low", SplitTag::train, 0},
                 {"a", "f", PatternSource::cahn_hilliard, 1, "low", SplitTag::train, 0}};
    EXPECT_NO_THROW(validate_manifest(m));
    auto dup = m;
    dup.entries.push_back(m.entries[0]);
    EXPECT_THROW(validate_manifest(dup), LeakageError);
    auto cross = m;
    cross.entries.push_back({"a", "f", PatternSource::cahn_hilliard, 2, "low", SplitTag::test, 0});
    EXPECT_THROW(validate_manifest(cross), LeakageError);
    auto synth_test = m;
    synth_test.entries.push_back({"b", "g", PatternSource::bernoulli, 0, "low", SplitTag::test, 0});
    EXPECT_THROW(validate_manifest(synth_test), LeakageError);
}

TEST(KFold, ThousandIdsFiveFolds) {
    const auto m = id_manifest(1000);
    const auto folds = kfold_split(m, 5, 3);
    ASSERT_EQ(folds.size(), 5u);
    std::set<std::string> all_val;
    for (const auto& f : folds) {
        EXPECT_EQ(f.count(SplitTag::val), 200u);
        EXPECT_EQ(f.count(SplitTag::train), 800u);
        for (const auto* e : f.select(SplitTag::val)) EXPECT_TRUE(all_val.insert(e->pattern_id).second);
    }
    EXPECT_EQ(all_val.size(), 1000u);
}

TEST(KFold, SmallestValidAndInvalidK) {
    const auto folds = kfold_split(id_manifest(2), 2);
    for (const auto& f : folds) {
        EXPECT_EQ(f.count(SplitTag::train), 1u);
        EXPECT_EQ(f.count(SplitTag::val), 1u);
    }
    EXPECT_THROW(kfold_split(id_manifest(3), 4), ArgumentError);
    EXPECT_THROW(kfold_split(id_manifest(3), 1), ArgumentError);
}

TEST(KFold, RotationsStayWithTheirBaseId) {
    DatasetManifest m;
    for (int i = 0; i < 6; ++i)
        for (int r = 0; r < 4; ++r)
            m.entries.push_back({"p" + std::to_string(i), "f", PatternSource::cahn_hilliard, r, "low", SplitTag::train, 0});
    for (const auto& f : kfold_split(m, 3, 9)) {
        EXPECT_NO_THROW(validate_manifest(f));
        EXPECT_EQ(f.count(SplitTag::val), 8u);
    }
}

TEST(MixSpec, ValidationAndJson) {
    MixSpec m;
    m.n_real = 10;
    m.n_synth = 5;
    m.seed = 4;
    EXPECT_EQ(MixSpec::from_json(m.to_json()).to_json(), m.to_json());
    MixSpec bad = m;
    bad.n_real = -1;
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = m;
    bad.procedural_grids = {5};
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = m;
    bad.val_fraction = 1.0;
    EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Forge, CapacityError) {
    MixSpec m;
    m.n_real = 8;
    m.n_test_real = 5;
    EXPECT_THROW(build_mixed_dataset(m, fea::low_fidelity(), fake_real_pool(10), {}), CapacityError);
}

TEST(Forge, SyntheticGenerationIsDeterministic) {
    MixSpec m;
    m.n_real = 0;
    m.n_synth = 6;
    m.seed = 11;
    const auto a = generate_synthetic(m, 0.6);
    const auto b = generate_synthetic(m, 0.6);
    ASSERT_EQ(a.size(), 6u);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].cells, b[i].cells);
        EXPECT_EQ(a[i].source, PatternSource::procedural);
    }
    m.synth_source = "bernoulli";
    EXPECT_EQ(generate_synthetic(m, 0.6)[0].source, PatternSource::bernoulli);
    m.synth_source = "gan";
    EXPECT_THROW(generate_synthetic(m, 0.6), ConfigError);
}

class ForgeBuild : public ::testing::Test {
protected:
    static MixSpec spec() {
        MixSpec m;
        m.n_real = 10;
        m.n_synth = 6;
        m.n_test_real = 4;
        m.rotations_enabled = true;
        m.seed = 21;
        return m;
    }
};

TEST_F(ForgeBuild, CountsSplitsAndRotations) {
    TempDir tmp("forge");
    BuildOptions opt;
    opt.out_dir = tmp.path() / "ds";
    opt.cache_dir = tmp.path() / "cache";
    const auto pool = fake_real_pool(20);
    const auto res = build_mixed_dataset(spec(), fea::low_fidelity(), pool, opt);
    const auto& m = res.manifest;
    EXPECT_EQ(res.records.size(), 20u);
    EXPECT_EQ(res.n_solved, 20u);
    EXPECT_EQ(m.count(SplitTag::test), 4u);
    EXPECT_EQ(m.count(SplitTag::val), 2u);
    EXPECT_EQ(m.count(SplitTag::train), 4u * (8 + 6));
    for (const auto* e : m.select(SplitTag::test)) EXPECT_EQ(e->rotation, 0);
    for (const auto* e : m.select(SplitTag::val)) EXPECT_EQ(e->rotation, 0);
    EXPECT_TRUE(fs::exists(opt.out_dir / "manifest.csv"));
    EXPECT_TRUE(fs::exists(opt.out_dir / "manifest.json"));
    EXPECT_TRUE(fs::exists(opt.out_dir / "sims.csv"));

    const auto back = read_manifest(opt.out_dir / "manifest.csv");
    EXPECT_EQ(back.provenance.at("config_hash"), m.provenance.at("config_hash"));
    const auto train = load_split(back, SplitTag::train, opt.out_dir);
    EXPECT_EQ(train.size(), 56u);
    // Entries with rotation r are the stored pattern turned r quarter turns.
    for (std::size_t i = 0; i < train.size(); ++i) {
        const auto base = read_pattern(opt.out_dir / "patterns" / (train.ids[i] + ".pbm"));
        EXPECT_EQ(train.x[i].cells, rotate_pattern(base, train.rotations[i]).cells);
    }
    for (const auto& r : res.records) EXPECT_NO_THROW(validate_sim_record(r));
}

TEST_F(ForgeBuild, SecondBuildIsCachedAndByteIdentical) {
    TempDir tmp("forge_cache");
    const auto pool = fake_real_pool(20);
    BuildOptions opt;
    opt.cache_dir = tmp.path() / "cache";
    opt.out_dir = tmp.path() / "a";
    const auto first = build_mixed_dataset(spec(), fea::low_fidelity(), pool, opt);
    opt.out_dir = tmp.path() / "b";
    const auto second = build_mixed_dataset(spec(), fea::low_fidelity(), pool, opt);
    EXPECT_EQ(second.n_solved, 0u);
    EXPECT_EQ(second.n_cached, 20u);
    EXPECT_EQ(read_file(tmp.path() / "a" / "manifest.csv"), read_file(tmp.path() / "b" / "manifest.csv"));
    EXPECT_EQ(read_file(tmp.path() / "a" / "sims.csv"), read_file(tmp.path() / "b" / "sims.csv"));
    EXPECT_EQ(read_file(tmp.path() / "a" / "manifest.json"), read_file(tmp.path() / "b" / "manifest.json"));
}

TEST_F(ForgeBuild, DifferentSeedChangesSelection) {
    const auto pool = fake_real_pool(20);
    auto a = spec(), b = spec();
    a.n_synth = b.n_synth = 0;
    b.seed = 22;
    const auto ma = build_mixed_dataset(a, fea::low_fidelity(), pool, {}).manifest;
    const auto mb = build_mixed_dataset(b, fea::low_fidelity(), pool, {}).manifest;
    EXPECT_NE(manifest_to_csv(ma), manifest_to_csv(mb));
}
