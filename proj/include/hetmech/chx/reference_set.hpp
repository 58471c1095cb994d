#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "hetmech/chx/cahn_hilliard.hpp"
#include "hetmech/common/parallel.hpp"
#include "hetmech/common/rng.hpp"
#include "hetmech/pattern/pattern_io.hpp"

namespace hetmech::chx {

/// Recipe for the bundled real-pattern set: runs cycle through mean
/// concentration, noise block size, interface parameter and well depth, and
/// each run contributes one pattern per snapshot. The time step is scaled with
/// the spinodal growth time 4 lambda / omega^2 so every run sees the same
/// step-to-growth ratio (the base dt is stable for lambda = 1e-2, omega = 100).
struct ReferenceRecipe {
    int n_runs = 250;
    std::vector<long> snapshot_steps{25, 60, 150, 400};
    std::uint64_t seed = 20230521;

    static constexpr std::array<double, 3> kC0{0.5, 0.63, 0.75};
    static constexpr std::array<int, 3> kInitGrid{32, 64, 128};
    static constexpr std::array<double, 3> kLambda{0.6e-2, 1e-2, 1.6e-2};
    static constexpr std::array<double, 2> kOmega{80.0, 120.0};
    static constexpr double kBaseDt = 5e-6;

    CHConfig run_config(int run) const {
        CHConfig cfg;
        cfg.c0 = kC0[run % 3];
        cfg.init_grid = kInitGrid[(run / 3) % 3];
        cfg.lambda_i = kLambda[(run / 9) % 3];
        cfg.omega = kOmega[(run / 27) % 2];
        cfg.dt = kBaseDt * (cfg.lambda_i / 1e-2) * (100.0 / cfg.omega) * (100.0 / cfg.omega);
        cfg.n_steps = snapshot_steps.back();
        cfg.snapshot_steps = snapshot_steps;
        cfg.seed = mix_seed(seed, static_cast<std::uint64_t>(run));
        return cfg;
    }

    std::size_t size() const { return static_cast<std::size_t>(n_runs) * snapshot_steps.size(); }
};

/// Runs the recipe and returns patterns (run-major, snapshot-minor) with metadata.
inline void generate_reference_set(const ReferenceRecipe& recipe, std::size_t jobs,
                                   std::vector<Pattern>& patterns, std::vector<PatternMeta>& metas) {
    const std::size_t per_run = recipe.snapshot_steps.size();
    patterns.assign(recipe.size(), Pattern{});
    metas.assign(recipe.size(), PatternMeta{});
    parallel_for(static_cast<std::size_t>(recipe.n_runs), jobs, [&](std::size_t run) {
        const auto cfg = recipe.run_config(static_cast<int>(run));
        const auto snaps = run_simulation(cfg);
        for (std::size_t s = 0; s < snaps.size(); ++s) {
            const std::size_t idx = run * per_run + s;
            patterns[idx] = binarize_and_downsample(snaps[s].second);
            patterns[idx].seed_or_id = std::to_string(cfg.seed);
            metas[idx] = {PatternSource::cahn_hilliard, std::to_string(cfg.seed), cfg.c0, snaps[s].first};
        }
    });
}

}  // namespace hetmech::chx
