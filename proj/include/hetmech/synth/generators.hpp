#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "hetmech/common/error.hpp"
#include "hetmech/common/rng.hpp"
#include "hetmech/pattern/pattern.hpp"

namespace hetmech::synth {

struct ProceduralConfig {
    int base_grid = 8;              // k: coarse random grid is k x k
    double target_fraction = 0.5;   // stiff fraction to hit
    int interp_order = 3;           // B-spline degree of the upsampler
    std::uint64_t seed = 0;

    void validate() const {
        if (base_grid <= 0 || kPatternSide % base_grid != 0)
            throw ConfigError("base_grid", "must divide 64");
        if (!(target_fraction > 0.0 && target_fraction < 1.0))
            throw ConfigError("target_fraction", "must lie in (0, 1)");
        if (interp_order < 1 || interp_order > 7)
            throw ConfigError("interp_order", "must lie in [1, 7]");
    }
};

struct BernoulliConfig {
    double p = 0.6594;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("p", "must lie in [0, 1]");
    }
};

/// Centered cardinal B-spline of degree m.
inline double bspline(int m, double x) {
    if (std::abs(x) >= 0.5 * (m + 1)) return 0.0;
    double sum = 0.0;
    double binom = 1.0;  // C(m+1, j)
    double fact = 1.0;
    for (int i = 2; i <= m; ++i) fact *= i;
    for (int j = 0; j <= m + 1; ++j) {
        const double t = x + 0.5 * (m + 1) - j;
        if (t > 0.0) sum += ((j % 2) ? -1.0 : 1.0) * binom * std::pow(t, m);
        binom = binom * (m + 1 - j) / (j + 1);
    }
    return sum / fact;
}

namespace detail {

/// Periodic 1-D interpolating spline: upsamples k node values (node j at
/// (j + 1/2)/k) to `out_n` samples at pixel centers. Shift-invariant: a cyclic
/// shift of the nodes by one shifts the output by out_n / k samples.
class PeriodicSplineUpsampler {
public:
    PeriodicSplineUpsampler(int k, int out_n, int order) : k_(k), out_n_(out_n), order_(order) {
        // Prefilter: circulant system sum_j a_j B(i - j) = v_i, inverted in
        // Fourier space. The symbol is strictly positive for odd degrees and
        // for even degrees on these grids.
        std::vector<double> taps(k, 0.0);
        const int reach = order / 2 + 1;
        for (int l = -reach; l <= reach; ++l) taps[((l % k) + k) % k] += bspline(order, l);
        inverse_.assign(static_cast<std::size_t>(k) * k, 0.0);
        for (int i = 0; i < k; ++i) {
            for (int j = 0; j < k; ++j) {
                double acc = 0.0;
                for (int f = 0; f < k; ++f) {
                    double sym = 0.0;
                    for (int l = 0; l < k; ++l)
                        sym += taps[l] * std::cos(2.0 * std::numbers::pi * f * l / k);
                    acc += std::cos(2.0 * std::numbers::pi * f * (i - j) / k) / sym;
                }
                inverse_[static_cast<std::size_t>(i) * k + j] = acc / k;
            }
        }
        // Evaluation weights: sample p sits at t = (p + 1/2) k / out_n - 1/2 in node units.
        weights_.assign(static_cast<std::size_t>(out_n) * k, 0.0);
        for (int p = 0; p < out_n; ++p) {
            const double t = (p + 0.5) * k / out_n - 0.5;
            const int lo = static_cast<int>(std::floor(t)) - reach;
            for (int j = lo; j <= lo + 2 * reach + 1; ++j) {
                const double w = bspline(order, t - j);
                if (w != 0.0) weights_[static_cast<std::size_t>(p) * k + ((j % k) + k) % k] += w;
            }
        }
    }

    void apply(std::span<const double> nodes, std::span<double> out) const {
        std::vector<double> coef(k_, 0.0);
        for (int i = 0; i < k_; ++i)
            for (int j = 0; j < k_; ++j) coef[i] += inverse_[static_cast<std::size_t>(i) * k_ + j] * nodes[j];
        for (int p = 0; p < out_n_; ++p) {
            double acc = 0.0;
            for (int j = 0; j < k_; ++j) acc += weights_[static_cast<std::size_t>(p) * k_ + j] * coef[j];
            out[p] = acc;
        }
    }

private:
    int k_, out_n_, order_;
    std::vector<double> inverse_;
    std::vector<double> weights_;
};

}  // namespace detail

/// Separable periodic spline upsampling of a k x k grid to 64 x 64.
inline std::vector<double> upsample_grid(std::span<const double> base, int k, int order) {
    constexpr int n = kPatternSide;
    detail::PeriodicSplineUpsampler up(k, n, order);
    std::vector<double> rows(static_cast<std::size_t>(k) * n);
    for (int r = 0; r < k; ++r) up.apply(base.subspan(static_cast<std::size_t>(r) * k, k), {rows.data() + r * n, static_cast<std::size_t>(n)});
    std::vector<double> out(static_cast<std::size_t>(n) * n);
    std::vector<double> col(k), col_out(n);
    for (int c = 0; c < n; ++c) {
        for (int r = 0; r < k; ++r) col[r] = rows[static_cast<std::size_t>(r) * n + c];
        up.apply(col, col_out);
        for (int r = 0; r < n; ++r) out[static_cast<std::size_t>(r) * n + c] = col_out[r];
    }
    return out;
}

/// Sets exactly round(fraction * 4096) cells (the brightest) to 1. Ties are
/// broken by cell index so the result is deterministic.
inline Pattern threshold_at_fraction(std::span<const double> image, double fraction) {
    const int n_on = static_cast<int>(std::lround(fraction * kPatternCells));
    std::vector<int> order(kPatternCells);
    for (int i = 0; i < kPatternCells; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return image[a] > image[b]; });
    Pattern p;
    for (int i = 0; i < n_on; ++i) p.cells[order[i]] = 1;
    return p;
}

/// Spatially correlated pattern: i.i.d. U[0,1] on a k x k grid, spline
/// upsampled to 64 x 64, thresholded at the image's own (1 - fraction) quantile.
inline Pattern procedural_pattern(const ProceduralConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    std::vector<double> base(static_cast<std::size_t>(cfg.base_grid) * cfg.base_grid);
    for (auto& v : base) v = uniform01(rng);
    const auto image = cfg.base_grid == kPatternSide ? base : upsample_grid(base, cfg.base_grid, cfg.interp_order);
    Pattern p = threshold_at_fraction(image, cfg.target_fraction);
    p.source = PatternSource::procedural;
    p.seed_or_id = std::to_string(cfg.seed);
    return p;
}

/// Uncorrelated pattern: each cell is stiff with probability p.
inline Pattern bernoulli_pattern(const BernoulliConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    Pattern pat;
    for (auto& c : pat.cells) c = uniform01(rng) < cfg.p ? 1 : 0;
    pat.source = PatternSource::bernoulli;
    pat.seed_or_id = std::to_string(cfg.seed);
    return pat;
}

/// Mean stiff fraction of a reference set, computed from integer counts so the
/// result is independent of summation order.
inline double calibrate_fraction(std::span<const Pattern> reference) {
    if (reference.empty()) throw ArgumentError("calibrate_fraction needs at least one pattern");
    long long ones = 0;
    for (const auto& p : reference) ones += p.stiff_count();
    return static_cast<double>(ones) / (static_cast<double>(reference.size()) * kPatternCells);
}

}  // namespace hetmech::synth
