#include <gtest/gtest.h>

#include <cmath>

#include "hetmech/chx/cahn_hilliard.hpp"
#include "hetmech/chx/gmres.hpp"
#include "hetmech/chx/reference_set.hpp"

using namespace hetmech;
using namespace hetmech::chx;

namespace {

CHConfig small_config(std::uint64_t seed, double c0 = 0.5) {
    CHConfig cfg;
    cfg.c0 = c0;
    cfg.sim_resolution = 64;
    cfg.init_grid = 64;
    cfg.seed = seed;
    return cfg;
}

// Unlike 4-neighbour pairs, periodic, counted once per pair.
int perimeter(const Pattern& p) {
    int n = 0;
    for (int r = 0; r < kPatternSide; ++r)
        for (int c = 0; c < kPatternSide; ++c) {
            n += p.at(r, c) != p.at(r, (c + 1) % kPatternSide);
            n += p.at(r, c) != p.at((r + 1) % kPatternSide, c);
        }
    return n;
}

}  // namespace

TEST(CHConfig, ValidationNamesField) {
    auto expect_field = [](CHConfig cfg, const std::string& field) {
        try {
            cfg.validate();
            FAIL() << "expected ConfigError for " << field;
        } catch (const ConfigError& e) {
            EXPECT_EQ(e.field(), field);
        }
    };
    CHConfig cfg;
    cfg.c0 = 1.0;
    expect_field(cfg, "c0");
    cfg = {};
    cfg.noise_amp = 0.6;
    expect_field(cfg, "noise_amp");
    cfg = {};
    cfg.dt = 0.0;
    expect_field(cfg, "dt");
    cfg = {};
    cfg.theta = 1.5;
    expect_field(cfg, "theta");
    cfg = {};
    cfg.init_grid = 48;
    expect_field(cfg, "init_grid");
    cfg = {};
    cfg.n_steps = 10;
    cfg.snapshot_steps = {5, 5};
    expect_field(cfg, "snapshot_steps");
    cfg.snapshot_steps = {5, 11};
    expect_field(cfg, "snapshot_steps");
}

TEST(DoubleWell, DerivativesMatchFiniteDifferences) {
    const double h = 1e-6;
    for (double c : {-0.1, 0.2, 0.5, 0.77, 1.05}) {
        EXPECT_NEAR(double_well_d1(c, 100), (double_well(c + h, 100) - double_well(c - h, 100)) / (2 * h), 1e-6);
        EXPECT_NEAR(double_well_d2(c, 100), (double_well_d1(c + h, 100) - double_well_d1(c - h, 100)) / (2 * h),
                    1e-6);
    }
    EXPECT_EQ(double_well(0.0, 100), 0.0);
    EXPECT_EQ(double_well(1.0, 100), 0.0);
    EXPECT_DOUBLE_EQ(double_well(0.5, 100), 100.0 / 16.0);
}

TEST(InitField, ZeroNoiseIsUniform) {
    CHConfig cfg;
    cfg.noise_amp = 0.0;
    const auto f = init_field(cfg);
    for (double v : f.values) ASSERT_EQ(v, 0.5);
    EXPECT_EQ(f.step_index, 0);
}

TEST(InitField, RangeMeanAndBlocks) {
    CHConfig cfg;
    cfg.c0 = 0.63;
    cfg.init_grid = 16;
    cfg.seed = 99;
    const auto f = init_field(cfg);
    for (double v : f.values) {
        ASSERT_GE(v, 0.58 - 1e-15);
        ASSERT_LE(v, 0.68 + 1e-15);
    }
    // Mean of 256 i.i.d. block offsets: 3 * noise_amp / init_grid is a loose bound.
    EXPECT_NEAR(f.mean(), 0.63, 0.05 / 16 * 3);
    // Piecewise constant on 8x8 blocks.
    for (int i = 0; i < 128; ++i)
        for (int j = 0; j < 128; ++j) ASSERT_EQ(f.at(i, j), f.at(i / 8 * 8, j / 8 * 8));
}

TEST(InitField, SeedDeterminism) {
    CHConfig cfg;
    cfg.seed = 5;
    EXPECT_EQ(init_field(cfg).values, init_field(cfg).values);
    CHConfig other = cfg;
    other.seed = 6;
    EXPECT_NE(init_field(cfg).values, init_field(other).values);
}

TEST(Step, UniformFieldIsFixedPoint) {
    for (double c0 : {0.5, 0.63, 0.75}) {
        auto cfg = small_config(1, c0);
        const auto f = ConcentrationField::uniform(64, c0);
        const auto g = step(f, cfg);
        for (double v : g.values) ASSERT_NEAR(v, c0, 1e-12);
        EXPECT_EQ(g.step_index, 1);
    }
}

TEST(Step, ConservesMassAndCachesIt) {
    auto cfg = small_config(3);
    auto f = init_field(cfg);
    CahnHilliardSolver solver(cfg);
    for (int s = 0; s < 20; ++s) {
        const auto g = solver.step(f);
        EXPECT_LT(std::abs(g.mean() - f.mean()) / f.mean(), 1e-10);
        double sum = 0.0;
        for (double v : g.values) sum += v;
        EXPECT_EQ(sum, g.total_mass);
        f = g;
    }
}

TEST(Step, RejectsResolutionMismatch) {
    auto cfg = small_config(1);
    EXPECT_THROW(step(ConcentrationField::uniform(32, 0.5), cfg), ConfigError);
}

TEST(Step, ResidualOfConvergedStepIsSmall) {
    // Re-evaluate the theta-scheme residual independently of the solver.
    auto cfg = small_config(8);
    const auto f = init_field(cfg);
    CahnHilliardSolver solver(cfg);
    const auto g = solver.step(f);
    const int n = 64;
    const double h = 1.0 / n;
    std::vector<double> mu0(n * n), mu1(n * n), lap(n * n), mix(n * n), out(n * n);
    auto mu_of = [&](const std::vector<double>& c, std::vector<double>& mu) {
        chx::detail::periodic_laplacian(n, h, c, lap);
        for (int k = 0; k < n * n; ++k) mu[k] = double_well_d1(c[k], cfg.omega) - cfg.lambda_i * lap[k];
    };
    mu_of(f.values, mu0);
    mu_of(g.values, mu1);
    for (int k = 0; k < n * n; ++k) mix[k] = (1 - cfg.theta) * mu0[k] + cfg.theta * mu1[k];
    chx::detail::periodic_laplacian(n, h, mix, out);
    double worst = 0.0;
    for (int k = 0; k < n * n; ++k)
        worst = std::max(worst, std::abs(g.values[k] - f.values[k] - cfg.dt * cfg.mobility * out[k]));
    EXPECT_LT(worst, 1e-10);
}

TEST(Step, FreeEnergyDecreasesOver500Steps) {
    auto cfg = small_config(11);
    cfg.n_steps = 500;
    cfg.snapshot_steps = {0, 500};
    const auto snaps = run_simulation(cfg);
    ASSERT_EQ(snaps.size(), 2u);
    EXPECT_LE(free_energy(snaps[1].second, cfg.lambda_i, cfg.omega),
              free_energy(snaps[0].second, cfg.lambda_i, cfg.omega));
}

TEST(RunSimulation, SnapshotsAndDeterminism) {
    auto cfg = small_config(21);
    cfg.n_steps = 30;
    cfg.snapshot_steps = {0, 7, 30};
    const auto a = run_simulation(cfg);
    const auto b = run_simulation(cfg);
    ASSERT_EQ(a.size(), 3u);
    EXPECT_EQ(a[0].first, 0);
    EXPECT_EQ(a[1].first, 7);
    EXPECT_EQ(a[2].second.step_index, 30);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].second.values, b[i].second.values);
    EXPECT_EQ(a[0].second.values, init_field(cfg).values);
}

TEST(RunSimulation, ZeroSteps) {
    CHConfig cfg;
    cfg.n_steps = 0;
    cfg.snapshot_steps = {0};
    const auto snaps = run_simulation(cfg);
    ASSERT_EQ(snaps.size(), 1u);
    EXPECT_EQ(snaps[0].second.values, init_field(cfg).values);
    cfg.snapshot_steps.clear();
    EXPECT_TRUE(run_simulation(cfg).empty());
}

TEST(RunSimulation, CoarseningReducesPerimeter) {
    CHConfig cfg;
    cfg.seed = 4;
    cfg.n_steps = 1000;
    cfg.snapshot_steps = {10, 100, 1000};
    const auto snaps = run_simulation(cfg);
    ASSERT_EQ(snaps.size(), 3u);
    const int p2 = perimeter(binarize_and_downsample(snaps[1].second));
    const int p3 = perimeter(binarize_and_downsample(snaps[2].second));
    EXPECT_LE(p3, p2);
}

TEST(RunSimulation, LeverRuleFraction) {
    CHConfig cfg;
    cfg.c0 = 0.75;
    cfg.seed = 2;
    cfg.n_steps = 400;
    cfg.snapshot_steps = {400};
    const auto snaps = run_simulation(cfg);
    EXPECT_NEAR(binarize_and_downsample(snaps[0].second).stiff_fraction(), 0.75, 0.1);
}

TEST(Binarize, UniformAndTieBreak) {
    EXPECT_EQ(binarize_and_downsample(ConcentrationField::uniform(128, 0.9)).stiff_count(), 4096);
    EXPECT_EQ(binarize_and_downsample(ConcentrationField::uniform(128, 0.5)).stiff_count(), 0);
    const auto p = binarize_and_downsample(ConcentrationField::uniform(64, 0.9));
    EXPECT_EQ(p.source, PatternSource::cahn_hilliard);
}

TEST(Binarize, CheckerboardPoolsToHalf) {
    auto f = ConcentrationField::uniform(128, 0.0);
    for (int i = 0; i < 128; ++i)
        for (int j = 0; j < 128; ++j) f.values[i * 128 + j] = (i + j) % 2 ? 1.0 : 0.0;
    f.refresh_mass();
    EXPECT_EQ(binarize_and_downsample(f, 0.5).stiff_count(), 0);
    EXPECT_EQ(binarize_and_downsample(f, 0.49).stiff_count(), 4096);
}

TEST(Binarize, RejectsNonMultipleOf64) {
    EXPECT_THROW(binarize_and_downsample(ConcentrationField::uniform(96, 0.5)), ConfigError);
}

TEST(Gmres, SolvesSmallNonsymmetricSystem) {
    Eigen::MatrixXd A(4, 4);
    A << 4, 1, 0, 0, -1, 5, 2, 0, 0, 1, 6, -2, 1, 0, 1, 3;
    const Eigen::VectorXd b = Eigen::VectorXd::LinSpaced(4, 1, 4);
    Eigen::VectorXd x;
    GmresWorkspace ws;
    const auto res = gmres([&](const Eigen::VectorXd& v, Eigen::VectorXd& out) { out = A * v; },
                           [](const Eigen::VectorXd& v, Eigen::VectorXd& out) { out = v; }, b, x, 1e-12, 2, 100,
                           ws);
    EXPECT_TRUE(res.converged);
    EXPECT_LT((A * x - b).norm(), 1e-10);
}

TEST(ReferenceRecipe, CyclesParameters) {
    ReferenceRecipe r;
    EXPECT_EQ(r.size(), 1000u);
    EXPECT_EQ(r.run_config(0).c0, 0.5);
    EXPECT_EQ(r.run_config(1).c0, 0.63);
    EXPECT_EQ(r.run_config(2).c0, 0.75);
    EXPECT_NE(r.run_config(0).seed, r.run_config(1).seed);
    for (int i = 0; i < r.n_runs; ++i) EXPECT_NO_THROW(r.run_config(i).validate());
}
