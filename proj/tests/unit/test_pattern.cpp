#include <gtest/gtest.h>

#include <set>

#include "hetmech/pattern/pattern.hpp"
#include "hetmech/pattern/pattern_io.hpp"
#include "test_util.hpp"

using namespace hetmech;
using hetmech::test_support::random_pattern;

TEST(Pattern, SourceNamesRoundTrip) {
    for (auto s : {PatternSource::cahn_hilliard, PatternSource::procedural, PatternSource::bernoulli,
                   PatternSource::wgan_cp, PatternSource::wgan_gp, PatternSource::external})
        EXPECT_EQ(parse_source(to_string(s)), s);
    EXPECT_THROW(parse_source("stylegan"), FormatError);
    EXPECT_TRUE(is_real_source(PatternSource::cahn_hilliard));
    EXPECT_FALSE(is_real_source(PatternSource::procedural));
}

TEST(Pattern, ValidatorRejectsNonBinary) {
    Pattern p = random_pattern(1);
    EXPECT_NO_THROW(validate_pattern(p));
    p.cells[17] = 2;
    EXPECT_THROW(validate_pattern(p), FormatError);
}

TEST(Rotate, IdentityAndInvolution) {
    const Pattern p = random_pattern(3);
    EXPECT_TRUE(rotate_pattern(p, 0).same_cells(p));
    EXPECT_TRUE(rotate_pattern(rotate_pattern(p, 2), 2).same_cells(p));
    EXPECT_TRUE(rotate_pattern(rotate_pattern(p, 1), 3).same_cells(p));
    EXPECT_TRUE(rotate_pattern(p, 4).same_cells(p));
    EXPECT_TRUE(rotate_pattern(p, -1).same_cells(rotate_pattern(p, 3)));
}

TEST(Rotate, CounterClockwiseCorner) {
    Pattern p;
    p.at(0, 63) = 1;  // top-right
    const Pattern q = rotate_pattern(p, 1);
    EXPECT_EQ(q.at(0, 0), 1);  // moves to top-left
    EXPECT_EQ(q.stiff_count(), 1);
}

TEST(Rotate, FourDistinctBitmapsForAsymmetricPattern) {
    const Pattern p = random_pattern(11);
    std::set<std::uint64_t> hashes;
    for (int k = 0; k < 4; ++k) {
        const auto r = rotate_pattern(p, k);
        EXPECT_EQ(r.stiff_count(), p.stiff_count());
        hashes.insert(r.content_hash());
    }
    EXPECT_EQ(hashes.size(), 4u);
}

TEST(Pbm, RoundTripAndLayout) {
    Pattern p;
    p.at(0, 0) = 1;
    p.at(63, 63) = 1;
    const auto bytes = encode_pbm(p);
    ASSERT_EQ(bytes.size(), std::string("P4\n64 64\n").size() + 512);
    EXPECT_EQ(static_cast<unsigned char>(bytes[9]), 0x80u);
    EXPECT_EQ(static_cast<unsigned char>(bytes.back()), 0x01u);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto q = random_pattern(seed);
        EXPECT_TRUE(decode_pbm(encode_pbm(q)).same_cells(q));
    }
}

TEST(Pbm, AcceptsCommentsRejectsWrongSize) {
    const Pattern p = random_pattern(4);
    std::string bytes = encode_pbm(p);
    std::string commented = "P4\n# made by hand\n64 64\n" + bytes.substr(9);
    EXPECT_TRUE(decode_pbm(commented).same_cells(p));
    EXPECT_THROW(decode_pbm("P4\n32 32\n" + std::string(128, '\0')), FormatError);
    EXPECT_THROW(decode_pbm(bytes.substr(0, bytes.size() - 1)), FormatError);
    EXPECT_THROW(decode_pbm("P1\n64 64\n"), FormatError);
}

TEST(Sidecar, SchemaRoundTripAndRejects) {
    PatternMeta m{PatternSource::cahn_hilliard, "12345", 0.63, 60};
    const auto back = meta_from_json(meta_to_json(m));
    EXPECT_EQ(back.source, m.source);
    EXPECT_EQ(back.seed, m.seed);
    EXPECT_EQ(back.c0, m.c0);
    EXPECT_EQ(back.snapshot_step, m.snapshot_step);
    PatternMeta none{PatternSource::bernoulli, "7", std::nullopt, std::nullopt};
    EXPECT_FALSE(meta_from_json(meta_to_json(none)).c0.has_value());
    auto j = meta_to_json(m);
    j["extra"] = 1;
    EXPECT_THROW(meta_from_json(j), FormatError);
    j = meta_to_json(m);
    j.erase("seed");
    EXPECT_THROW(meta_from_json(j), FormatError);
    j = meta_to_json(m);
    j["snapshot_step"] = 1.5;
    EXPECT_THROW(meta_from_json(j), FormatError);
}

TEST(PatternSet, WriteLoadRoundTrip) {
    test_support::TempDir dir("pset");
    std::vector<Pattern> pats;
    std::vector<PatternMeta> metas;
    for (std::uint64_t s = 0; s < 5; ++s) {
        pats.push_back(random_pattern(s));
        metas.push_back({PatternSource::procedural, std::to_string(s), std::nullopt, std::nullopt});
    }
    const auto entries = write_pattern_set(dir.path(), pats, metas, "p");
    ASSERT_EQ(entries.size(), 5u);
    EXPECT_EQ(entries[2].pattern_id, "p00002");
    std::vector<PatternEntry> loaded_entries;
    const auto loaded = load_pattern_set(dir.path() / "manifest.csv", &loaded_entries);
    ASSERT_EQ(loaded.size(), 5u);
    for (std::size_t i = 0; i < 5; ++i) {
        EXPECT_TRUE(loaded[i].same_cells(pats[i]));
        EXPECT_EQ(loaded[i].source, PatternSource::procedural);
        EXPECT_EQ(loaded_entries[i].seed, std::to_string(i));
    }
    PatternMeta meta;
    const auto one = read_pattern(dir.path() / "p00003.pbm", &meta);
    EXPECT_TRUE(one.same_cells(pats[3]));
    EXPECT_EQ(meta.seed, "3");
}
