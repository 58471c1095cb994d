#include <gtest/gtest.h>

#include "hetmech/metrics/metrics.hpp"
#include "hetmech/synth/generators.hpp"
#include "test_util.hpp"

using namespace hetmech;
using namespace hetmech::metrics;

TEST(R2Mae, WorkedExample) {
    const std::vector<double> t{0, 1, 2}, p{0, 1, 1};
    const auto s = r2_mae(t, p);
    EXPECT_NEAR(s.r2, 0.5, 1e-15);
    EXPECT_NEAR(s.mae, 1.0 / 3.0, 1e-15);
}

TEST(R2Mae, PerfectAndMeanPredictors) {
    const std::vector<double> t{1, 2, 4, 8};
    EXPECT_DOUBLE_EQ(r2_mae(t, t).r2, 1.0);
    EXPECT_DOUBLE_EQ(r2_mae(t, t).mae, 0.0);
    const std::vector<double> mean(4, 3.75);
    EXPECT_NEAR(r2_mae(t, mean).r2, 0.0, 1e-15);
}

TEST(R2Mae, Errors) {
    const std::vector<double> a{1, 2}, b{1};
    EXPECT_THROW(r2_mae(a, b), ArgumentError);
    EXPECT_THROW(r2_mae(std::vector<double>{}, std::vector<double>{}), ArgumentError);
    const std::vector<double> c{2, 2, 2}, d{1, 2, 3};
    EXPECT_THROW(r2_mae(c, d), UndefinedMetricError);
}

namespace {
FrechetStats gaussian(std::vector<double> mean, Eigen::MatrixXd cov) {
    return {Eigen::Map<Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size())), std::move(cov)};
}
}  // namespace

TEST(Frechet, OneDimensionalClosedForm) {
    // (0,1) vs (1,1): (0-1)^2 + 1 + 1 - 2 = 1
    Eigen::MatrixXd one(1, 1);
    one << 1.0;
    EXPECT_NEAR(frechet_distance(gaussian({0.0}, one), gaussian({1.0}, one)), 1.0, 1e-12);
    // (0, 4) vs (0, 1): 4 + 1 - 2*2 = 1
    Eigen::MatrixXd four(1, 1);
    four << 4.0;
    EXPECT_NEAR(frechet_distance(gaussian({0.0}, four), gaussian({0.0}, one)), 1.0, 1e-12);
}

TEST(Frechet, DiagonalSwap) {
    Eigen::MatrixXd a = Eigen::Vector2d(1, 4).asDiagonal(), b = Eigen::Vector2d(4, 1).asDiagonal();
    // (1-2)^2 + (2-1)^2 = 2
    EXPECT_NEAR(frechet_distance(gaussian({0, 0}, a), gaussian({0, 0}, b)), 2.0, 1e-12);
}

TEST(Frechet, IdentityAndSymmetry) {
    Rng rng(5);
    Eigen::MatrixXd x(50, 4), y(60, 4);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = uniform01(rng);
    for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = uniform01(rng) * 2.0 + 0.3;
    const auto sx = stats_from_rows(x), sy = stats_from_rows(y);
    EXPECT_NEAR(frechet_distance(sx, sx), 0.0, 1e-10);
    const double dxy = frechet_distance(sx, sy), dyx = frechet_distance(sy, sx);
    EXPECT_GT(dxy, 0.0);
    EXPECT_NEAR(dxy, dyx, 1e-10 * dxy);
}

TEST(Frechet, SingularButPsdIsAccepted) {
    Eigen::MatrixXd a = Eigen::Vector2d(1, 0).asDiagonal();
    EXPECT_NEAR(frechet_distance(gaussian({0, 0}, a), gaussian({0, 0}, a)), 0.0, 1e-12);
}

TEST(Frechet, NonPsdAndMismatchThrow) {
    Eigen::MatrixXd bad = Eigen::Vector2d(1, -1).asDiagonal();
    Eigen::MatrixXd ok = Eigen::Matrix2d::Identity();
    EXPECT_THROW(frechet_distance(gaussian({0, 0}, bad), gaussian({0, 0}, ok)), NumericalDomainError);
    Eigen::MatrixXd one(1, 1);
    one << 1.0;
    EXPECT_THROW(frechet_distance(gaussian({0}, one), gaussian({0, 0}, ok)), ArgumentError);
}

TEST(Frechet, SampleSizeGuard) {
    std::vector<Pattern> few(kDescriptorDim);
    EXPECT_THROW(descriptor_stats(few), SampleSizeError);
    Eigen::MatrixXd x(3, 3);
    EXPECT_THROW(stats_from_rows(x), SampleSizeError);
}

TEST(Descriptors, SinglePhaseAndStripes) {
    Pattern solid;
    solid.cells.fill(1);
    const auto d = descriptors(solid);
    EXPECT_DOUBLE_EQ(d[0], 1.0);
    for (int i = 1; i <= 5; ++i) EXPECT_DOUBLE_EQ(d[i], 1.0);
    EXPECT_DOUBLE_EQ(d[6], 0.0);
    EXPECT_DOUBLE_EQ(d[7], 1.0 / kPatternCells);

    // Vertical stripes of width 1: every horizontal pair is cut, no vertical one.
    Pattern stripes;
    for (int r = 0; r < kPatternSide; ++r)
        for (int c = 0; c < kPatternSide; ++c) stripes.at(r, c) = c % 2;
    EXPECT_DOUBLE_EQ(perimeter_density(stripes), 0.5);
    EXPECT_EQ(component_count(stripes), 64);
    // lag 1: x-pairs never both stiff, y-pairs always -> S2 = 0.25 = phi^2
    EXPECT_NEAR(two_point_correlation(stripes, 1), 0.0, 1e-15);
    EXPECT_NEAR(two_point_correlation(stripes, 2), 1.0, 1e-15);
}

TEST(Descriptors, ComponentsWrapAroundTheTorus) {
    Pattern p;
    p.at(0, 0) = 1;
    p.at(0, 63) = 1;
    p.at(63, 0) = 1;
    EXPECT_EQ(component_count(p), 2);
}

TEST(Descriptors, RotationInvariant) {
    for (std::uint64_t s = 0; s < 5; ++s) {
        const auto p = test_support::random_pattern(s, 0.3 + 0.1 * s);
        const auto d0 = descriptors(p);
        for (int q = 1; q < 4; ++q) {
            const auto d = descriptors(rotate_pattern(p, q));
            for (int i = 0; i < kDescriptorDim; ++i) EXPECT_NEAR(d[i], d0[i], 1e-12) << "q=" << q << " i=" << i;
        }
    }
}

TEST(Frechet, SeparatesGeneratorsAndBootstrapIsPositive) {
    std::vector<Pattern> bern, proc, proc2;
    for (std::uint64_t s = 0; s < 60; ++s) {
        bern.push_back(synth::bernoulli_pattern({0.6, s}));
        synth::ProceduralConfig c;
        c.base_grid = 8;
        c.target_fraction = 0.6;
        c.seed = s;
        proc.push_back(synth::procedural_pattern(c));
        c.seed = 1000 + s;
        proc2.push_back(synth::procedural_pattern(c));
    }
    const auto xb = descriptor_matrix(bern), xp = descriptor_matrix(proc), xq = descriptor_matrix(proc2);
    const double same = frechet_distance(stats_from_rows(xp), stats_from_rows(xq));
    const double diff = frechet_distance(stats_from_rows(xp), stats_from_rows(xb));
    EXPECT_LT(same, diff);
    const double se = bootstrap_frechet_se(xp, xb, 20, 3);
    EXPECT_GT(se, 0.0);
    EXPECT_EQ(se, bootstrap_frechet_se(xp, xb, 20, 3));
}

TEST(Histogram, SharedBinsAndOverlap) {
    const auto h = histogram_report({{"a", {0.0, 0.0, 1.0, 1.0}}, {"b", {1.0, 1.0}}}, 2);
    ASSERT_EQ(h.edges.size(), 3u);
    EXPECT_DOUBLE_EQ(h.edges.front(), 0.0);
    EXPECT_DOUBLE_EQ(h.edges.back(), 1.0);
    EXPECT_EQ(h.percent.at("a"), (std::vector<double>{50.0, 50.0}));
    EXPECT_EQ(h.percent.at("b"), (std::vector<double>{0.0, 100.0}));
    EXPECT_DOUBLE_EQ(overlap_coefficient(h, "a", "b"), 0.5);
    EXPECT_DOUBLE_EQ(overlap_coefficient(h, "a", "a"), 1.0);
    const auto t = h.to_table();
    EXPECT_EQ(t.header, (std::vector<std::string>{"bin_lo", "bin_hi", "a", "b"}));
    EXPECT_EQ(t.rows.size(), 2u);
    EXPECT_THROW(histogram_report({{"a", {}}}, 2), ArgumentError);
    EXPECT_THROW(histogram_report({{"a", {1.0}}}, 0), ArgumentError);
}
