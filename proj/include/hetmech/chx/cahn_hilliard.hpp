#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hetmech/chx/gmres.hpp"
#include "hetmech/chx/spectral.hpp"
#include "hetmech/common/error.hpp"
#include "hetmech/common/rng.hpp"
#include "hetmech/pattern/pattern.hpp"

namespace hetmech::chx {

/// Parameters of one phase-separation run on the periodic unit square.
/// Free energy density is omega * c^2 (1 - c)^2 with wells at 0 and 1.
struct CHConfig {
    double c0 = 0.5;
    double noise_amp = 0.05;
    int init_grid = 128;  // number of independent noise blocks per side
    double mobility = 1.0;
    double lambda_i = 1e-2;
    double omega = 100.0;
    double dt = 5e-6;
    double theta = 0.5;
    long n_steps = 0;
    std::vector<long> snapshot_steps;
    int sim_resolution = 128;
    std::uint64_t seed = 0;

    // Nonlinear / linear solver controls.
    double newton_tol = 1e-11;  // max-norm of the step residual
    int max_newton_iters = 25;
    double gmres_rtol = 1e-4;   // floor of the inexact-Newton forcing term
    int gmres_restart = 30;
    int gmres_max_iters = 300;

    void validate() const {
        if (!(c0 > 0.0 && c0 < 1.0)) throw ConfigError("c0", "must lie in (0, 1)");
        if (!(noise_amp >= 0.0 && noise_amp < std::min(c0, 1.0 - c0)))
            throw ConfigError("noise_amp", "must satisfy 0 <= noise_amp < min(c0, 1 - c0)");
        if (sim_resolution < 4 || sim_resolution % 2 != 0)
            throw ConfigError("sim_resolution", "must be an even integer >= 4");
        if (init_grid <= 0 || sim_resolution % init_grid != 0)
            throw ConfigError("init_grid", "must be a positive divisor of sim_resolution");
        if (!(mobility >= 0.0)) throw ConfigError("mobility", "must be >= 0");
        if (!(lambda_i > 0.0)) throw ConfigError("lambda_i", "must be > 0");
        if (!(omega > 0.0)) throw ConfigError("omega", "must be > 0");
        if (!(dt > 0.0)) throw ConfigError("dt", "must be > 0");
        if (!(theta >= 0.0 && theta <= 1.0)) throw ConfigError("theta", "must lie in [0, 1]");
        if (n_steps < 0) throw ConfigError("n_steps", "must be >= 0");
        for (std::size_t i = 0; i < snapshot_steps.size(); ++i) {
            if (snapshot_steps[i] < 0 || snapshot_steps[i] > n_steps)
                throw ConfigError("snapshot_steps", "entries must lie in [0, n_steps]");
            if (i > 0 && snapshot_steps[i] <= snapshot_steps[i - 1])
                throw ConfigError("snapshot_steps", "must be strictly increasing");
        }
        if (!(newton_tol > 0.0)) throw ConfigError("newton_tol", "must be > 0");
    }
};

/// Square concentration grid, row-major.
struct ConcentrationField {
    int n = 0;
    std::vector<double> values;
    long step_index = 0;
    double total_mass = 0.0;

    double at(int i, int j) const { return values[static_cast<std::size_t>(i) * n + j]; }
    double mean() const { return total_mass / (static_cast<double>(n) * n); }
    void refresh_mass() {
        total_mass = 0.0;
        for (double v : values) total_mass += v;
    }

    static ConcentrationField uniform(int n, double value, long step = 0) {
        ConcentrationField f;
        f.n = n;
        f.values.assign(static_cast<std::size_t>(n) * n, value);
        f.step_index = step;
        f.refresh_mass();
        return f;
    }
};

inline double double_well(double c, double omega) {
    const double a = c * (1.0 - c);
    return omega * a * a;
}
inline double double_well_d1(double c, double omega) {
    return 2.0 * omega * c * (1.0 - c) * (1.0 - 2.0 * c);
}
inline double double_well_d2(double c, double omega) {
    return omega * (2.0 - 12.0 * c + 12.0 * c * c);
}

namespace detail {

/// out = 5-point periodic Laplacian of v (spacing h).
template <class In, class Out>
void periodic_laplacian(int n, double h, const In& v, Out& out) {
    const double s = 1.0 / (h * h);
    const double* p = &v[0];
    double* o = &out[0];
    for (int i = 0; i < n; ++i) {
        const double* up = p + (i == 0 ? n - 1 : i - 1) * n;
        const double* dn = p + (i == n - 1 ? 0 : i + 1) * n;
        const double* row = p + i * n;
        double* dst = o + i * n;
        dst[0] = s * (up[0] + dn[0] + row[n - 1] + row[1] - 4.0 * row[0]);
        for (int j = 1; j < n - 1; ++j)
            dst[j] = s * (up[j] + dn[j] + row[j - 1] + row[j + 1] - 4.0 * row[j]);
        dst[n - 1] = s * (up[n - 1] + dn[n - 1] + row[n - 2] + row[0] - 4.0 * row[n - 1]);
    }
}

}  // namespace detail

/// Discrete Ginzburg-Landau energy: h^2 * sum[f(c) + lambda/2 |grad_h c|^2] with
/// forward differences, which is the functional the scheme's chemical potential
/// is the variational derivative of.
inline double free_energy(const ConcentrationField& f, double lambda_i, double omega) {
    const int n = f.n;
    const double h = 1.0 / n;
    double bulk = 0.0, grad = 0.0;
    for (int i = 0; i < n; ++i) {
        const int ip = (i + 1) % n;
        for (int j = 0; j < n; ++j) {
            const int jp = (j + 1) % n;
            const double c = f.at(i, j);
            bulk += double_well(c, omega);
            const double dx = f.at(i, jp) - c;
            const double dy = f.at(ip, j) - c;
            grad += dx * dx + dy * dy;
        }
    }
    return h * h * bulk + 0.5 * lambda_i * grad;
}

/// Initial condition: c0 plus piecewise-constant uniform noise on
/// init_grid x init_grid blocks, drawn row-major from the seeded generator.
inline ConcentrationField init_field(const CHConfig& cfg) {
    cfg.validate();
    const int n = cfg.sim_resolution;
    const int g = cfg.init_grid;
    const int block = n / g;
    Rng rng(cfg.seed);
    std::vector<double> noise(static_cast<std::size_t>(g) * g);
    for (auto& v : noise) v = uniform(rng, -cfg.noise_amp, cfg.noise_amp);
    ConcentrationField f;
    f.n = n;
    f.values.resize(static_cast<std::size_t>(n) * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            f.values[static_cast<std::size_t>(i) * n + j] = cfg.c0 + noise[(i / block) * g + j / block];
    f.step_index = 0;
    f.refresh_mass();
    return f;
}

/// Theta-weighted mixed-form stepper. Unknown is c_{n+1}; the chemical
/// potential mu = f'(c) - lambda * lap(c) is eliminated, so each step solves
///   c - c_n - dt M lap((1 - theta) mu_n + theta mu(c)) = 0
/// by Newton. Newton corrections are GMRES solves preconditioned with the
/// constant-coefficient linearization, inverted by FFT.
class CahnHilliardSolver {
public:
    explicit CahnHilliardSolver(const CHConfig& cfg)
        : cfg_(cfg), n_(cfg.sim_resolution), h_(1.0 / cfg.sim_resolution), spectral_(cfg.sim_resolution) {
        cfg_.validate();
        const std::size_t total = static_cast<std::size_t>(n_) * n_;
        mu_old_.resize(total);
        work_.resize(total);
        work2_.resize(total);
        fpp_.resize(total);
        residual_.resize(total);
        tmp_.resize(total);
        tmp2_.resize(total);
        rhs_.resize(static_cast<Eigen::Index>(total));
        dx_.resize(static_cast<Eigen::Index>(total));
    }

    const CHConfig& config() const { return cfg_; }

    /// Chemical potential mu = f'(c) - lambda lap(c).
    void chemical_potential(const std::vector<double>& c, std::vector<double>& mu) {
        detail::periodic_laplacian(n_, h_, c, work2_);
        for (std::size_t k = 0; k < c.size(); ++k)
            mu[k] = double_well_d1(c[k], cfg_.omega) - cfg_.lambda_i * work2_[k];
    }

    /// Advances `in` by one step. When `previous` (the field one step before
    /// `in`) is given, Newton starts from the linear extrapolation 2 in - previous.
    ConcentrationField step(const ConcentrationField& in, const ConcentrationField* previous = nullptr) {
        if (in.n != n_)
            throw ConfigError("sim_resolution", "field resolution " + std::to_string(in.n) +
                                                    " does not match config " + std::to_string(n_));
        const double dtm = cfg_.dt * cfg_.mobility;
        const double th = cfg_.theta;
        const std::size_t total = in.values.size();

        chemical_potential(in.values, mu_old_);
        std::vector<double> c = in.values;
        if (previous && previous->n == n_)
            for (std::size_t k = 0; k < total; ++k) c[k] = 2.0 * in.values[k] - previous->values[k];

        auto eval_residual = [&]() {
            // residual = c - c_n - dtM lap((1-th) mu_old + th mu(c))
            chemical_potential(c, work_);
            for (std::size_t k = 0; k < total; ++k) work_[k] = (1.0 - th) * mu_old_[k] + th * work_[k];
            detail::periodic_laplacian(n_, h_, work_, work2_);
            double rmax = 0.0;
            for (std::size_t k = 0; k < total; ++k) {
                residual_[k] = c[k] - in.values[k] - dtm * work2_[k];
                rmax = std::max(rmax, std::abs(residual_[k]));
            }
            return rmax;
        };

        double rnorm = eval_residual();
        int iter = 0;
        auto& tmp = tmp_;
        auto& tmp2 = tmp2_;
        while (rnorm > cfg_.newton_tol) {
            if (iter++ >= cfg_.max_newton_iters)
                throw StepError(in.step_index + 1, rnorm, "Newton iteration limit reached");
            double fpp_mean = 0.0;
            for (std::size_t k = 0; k < total; ++k) {
                fpp_[k] = double_well_d2(c[k], cfg_.omega);
                fpp_mean += fpp_[k];
            }
            fpp_mean /= static_cast<double>(total);
            const double a = std::max(fpp_mean, 0.0);
            const double lam = cfg_.lambda_i;
            spectral_.set_symbol(h_, [&](double kk) { return 1.0 + dtm * th * kk * (a + lam * kk); });

            // J v = v - dtM th lap(f''(c) v - lambda lap v)
            auto apply_jacobian = [&](const Eigen::VectorXd& v, Eigen::VectorXd& out) {
                detail::periodic_laplacian(n_, h_, v, tmp);
                for (std::size_t k = 0; k < total; ++k) tmp[k] = fpp_[k] * v[k] - lam * tmp[k];
                detail::periodic_laplacian(n_, h_, tmp, tmp2);
                for (std::size_t k = 0; k < total; ++k) out[k] = v[k] - dtm * th * tmp2[k];
            };
            auto precondition = [&](const Eigen::VectorXd& v, Eigen::VectorXd& out) { spectral_.apply(v, out); };

            auto& rhs = rhs_;
            auto& dx = dx_;
            for (std::size_t k = 0; k < total; ++k) rhs[k] = -residual_[k];
            // Inexact Newton: the linear tolerance tightens with the residual.
            const double eta = std::max(cfg_.gmres_rtol, std::min(1e-2, rnorm));
            const auto res = gmres(apply_jacobian, precondition, rhs, dx, eta,
                                   cfg_.gmres_restart, cfg_.gmres_max_iters, gmres_ws_);
            gmres_iters_ += res.iterations;
            if (!res.converged)
                throw StepError(in.step_index + 1, rnorm,
                                "GMRES stalled at relative residual " + std::to_string(res.relative_residual));
            // The exact correction has zero mean; remove round-off drift.
            const double mean = dx.mean();
            for (std::size_t k = 0; k < total; ++k) c[k] += dx[k] - mean;
            rnorm = eval_residual();
            if (!std::isfinite(rnorm)) throw StepError(in.step_index + 1, rnorm, "non-finite residual");
        }
        last_newton_iters_ = iter;

        ConcentrationField out;
        out.n = n_;
        out.values = std::move(c);
        out.step_index = in.step_index + 1;
        out.refresh_mass();
        return out;
    }

    int last_newton_iterations() const { return last_newton_iters_; }
    long total_gmres_iterations() const { return gmres_iters_; }

private:
    CHConfig cfg_;
    int n_;
    double h_;
    SpectralInverse spectral_;
    std::vector<double> mu_old_, work_, work2_, fpp_, residual_, tmp_, tmp2_;
    Eigen::VectorXd rhs_, dx_;
    GmresWorkspace gmres_ws_;
    int last_newton_iters_ = 0;
    long gmres_iters_ = 0;
};

/// One time step of the scheme.
inline ConcentrationField step(const ConcentrationField& field, const CHConfig& cfg) {
    CahnHilliardSolver solver(cfg);
    return solver.step(field);
}

using StepObserver = std::function<void(const ConcentrationField&)>;

/// Runs n_steps steps and returns the fields at snapshot_steps (step 0 is the
/// initial field). `observer`, when set, sees every field including step 0.
/// On failure nothing is returned; the step error propagates.
inline std::vector<std::pair<long, ConcentrationField>> run_simulation(const CHConfig& cfg,
                                                                       const StepObserver& observer = {}) {
    cfg.validate();
    std::vector<std::pair<long, ConcentrationField>> snaps;
    auto next_snap = cfg.snapshot_steps.begin();
    ConcentrationField f = init_field(cfg);
    auto record = [&](const ConcentrationField& cur) {
        if (observer) observer(cur);
        if (next_snap != cfg.snapshot_steps.end() && *next_snap == cur.step_index) {
            snaps.emplace_back(cur.step_index, cur);
            ++next_snap;
        }
    };
    record(f);
    if (cfg.n_steps == 0) return snaps;
    CahnHilliardSolver solver(cfg);
    ConcentrationField prev;
    for (long s = 0; s < cfg.n_steps; ++s) {
        ConcentrationField next = solver.step(f, s > 0 ? &prev : nullptr);
        prev = std::move(f);
        f = std::move(next);
        record(f);
    }
    return snaps;
}

/// Area-average pooling down to 64x64, then cell = 1 where pooled > threshold.
inline Pattern binarize_and_downsample(const ConcentrationField& field, double threshold = 0.5) {
    if (field.n <= 0 || field.n % kPatternSide != 0)
        throw ConfigError("sim_resolution", "resolution " + std::to_string(field.n) +
                                                " is not a multiple of 64");
    const int f = field.n / kPatternSide;
    Pattern p;
    p.source = PatternSource::cahn_hilliard;
    for (int r = 0; r < kPatternSide; ++r)
        for (int c = 0; c < kPatternSide; ++c) {
            double acc = 0.0;
            for (int a = 0; a < f; ++a)
                for (int b = 0; b < f; ++b) acc += field.at(r * f + a, c * f + b);
            p.at(r, c) = acc / (f * f) > threshold ? 1 : 0;
        }
    return p;
}

}  // namespace hetmech::chx
