#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>
#include <numeric>
#include <vector>

#include "hetmech/common/error.hpp"
#include "hetmech/common/hash.hpp"
#include "hetmech/common/io.hpp"
#include "hetmech/common/parallel.hpp"
#include "hetmech/common/rng.hpp"
#include "test_util.hpp"

using namespace hetmech;

TEST(Rng, Uniform01RangeAndDeterminism) {
    Rng a(42), b(42);
    for (int i = 0; i < 10000; ++i) {
        const double x = uniform01(a);
        ASSERT_GE(x, 0.0);
        ASSERT_LT(x, 1.0);
        ASSERT_EQ(x, uniform01(b));
    }
}

TEST(Rng, UniformIndexCoversRange) {
    Rng rng(1);
    std::vector<int> hits(7, 0);
    for (int i = 0; i < 7000; ++i) ++hits[uniform_index(rng, 7)];
    for (int h : hits) EXPECT_GT(h, 800);
}

TEST(Rng, ShuffleIsPermutationAndSeeded) {
    std::vector<int> v(100), w;
    std::iota(v.begin(), v.end(), 0);
    w = v;
    Rng r1(5), r2(5);
    stable_shuffle(v.begin(), v.end(), r1);
    stable_shuffle(w.begin(), w.end(), r2);
    EXPECT_EQ(v, w);
    auto s = v;
    std::sort(s.begin(), s.end());
    for (int i = 0; i < 100; ++i) EXPECT_EQ(s[i], i);
}

TEST(Rng, MixSeedSeparatesStreams) {
    EXPECT_NE(mix_seed(1, 0), mix_seed(1, 1));
    EXPECT_NE(mix_seed(1, 0), mix_seed(2, 0));
    EXPECT_EQ(mix_seed(9, 3), mix_seed(9, 3));
}

TEST(Hash, KnownFnvVectors) {
    // Reference values of 64-bit FNV-1a.
    EXPECT_EQ(hash_hex(""), "cbf29ce484222325");
    EXPECT_EQ(hash_hex("a"), "af63dc4c8601ec8c");
    EXPECT_EQ(hash_hex("foobar"), "85944171f73967e8");
}

TEST(Io, FormatDoubleRoundTrips) {
    for (double v : {0.0, 1.0, -2.5, 0.1, 1e-300, 3.141592653589793, 0.52088831600816}) {
        EXPECT_EQ(parse_double(format_double(v)), v);
    }
    EXPECT_THROW(parse_double("1.0x"), FormatError);
    EXPECT_THROW(parse_int("12a"), FormatError);
    EXPECT_EQ(parse_int("-17"), -17);
}

TEST(Io, CsvRoundTrip) {
    CsvTable t;
    t.header = {"a", "b"};
    t.rows = {{"1", "x"}, {"2", ""}};
    const auto text = to_csv(t);
    EXPECT_EQ(text, "a,b\n1,x\n2,\n");
    const auto back = parse_csv(text);
    EXPECT_EQ(back.header, t.header);
    EXPECT_EQ(back.rows, t.rows);
    EXPECT_EQ(back.column("b"), 1u);
    EXPECT_THROW(back.column("c"), FormatError);
    EXPECT_THROW(parse_csv("a,b\n1\n"), FormatError);
    t.rows.push_back({"3,4", "y"});
    EXPECT_THROW(to_csv(t), FormatError);
}

TEST(Io, AtomicWriteReplaces) {
    test_support::TempDir dir("io");
    const auto p = dir.path() / "sub" / "f.bin";
    write_file_atomic(p, "first");
    write_file_atomic(p, std::string("sec\0ond", 7));
    EXPECT_EQ(read_file(p), std::string("sec\0ond", 7));
    EXPECT_FALSE(fs::exists(dir.path() / "sub" / "f.bin.tmp"));
    EXPECT_THROW(read_file(dir.path() / "missing"), IoError);
}

TEST(Parallel, ResultsIndependentOfJobs) {
    for (std::size_t jobs : {1u, 2u, 4u}) {
        std::vector<long> out(257, 0);
        parallel_for(out.size(), jobs, [&](std::size_t i) { out[i] = static_cast<long>(i * i); });
        for (std::size_t i = 0; i < out.size(); ++i) ASSERT_EQ(out[i], static_cast<long>(i * i));
    }
}

TEST(Parallel, RethrowsLowestIndexError) {
    try {
        parallel_for(50, 3, [](std::size_t i) {
            if (i == 7 || i == 30) throw ArgumentError("at " + std::to_string(i));
        });
        FAIL() << "expected throw";
    } catch (const ArgumentError& e) {
        EXPECT_NE(std::string(e.what()).find("at 7"), std::string::npos);
    }
}

TEST(Errors, ExitCodes) {
    EXPECT_EQ(ConfigError("x", "y").exit_code(), ExitCode::config);
    EXPECT_EQ(ArgumentError("x").exit_code(), ExitCode::config);
    EXPECT_EQ(StepError(3, 1.0, "x").exit_code(), ExitCode::solver);
    EXPECT_EQ(DivergenceError("w", "nan").exit_code(), ExitCode::solver);
    EXPECT_EQ(ConfigError("dt", "bad").field(), "dt");
    const StageError st("train", "abc", "/tmp/x", DivergenceError("w", "nan"));
    EXPECT_EQ(st.exit_code(), ExitCode::solver);
    EXPECT_NE(std::string(st.what()).find("train"), std::string::npos);
}
