#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#ifdef HETMECH_HAVE_CHOLMOD
#include <Eigen/CholmodSupport>
#endif

#include "hetmech/common/error.hpp"
#include "hetmech/fea/material.hpp"
#include "hetmech/fea/mesh.hpp"

namespace hetmech::fea {

/// Outputs of one equibiaxial extension run.
struct SimRecord {
    std::string pattern_id;
    std::string fidelity;
    std::vector<std::pair<double, double>> delta_psi;  // (d, Delta Psi)
    std::vector<double> reaction_fx;                   // x = 1 face, outward positive
    std::vector<double> reaction_fy;                   // y = 1 face, outward positive
    std::vector<double> displacement_field;            // 64 x 64 x 2, row-major, row 0 at y = 1
    double wall_time_s = 0.0;

    double final_delta_psi() const { return delta_psi.empty() ? 0.0 : delta_psi.back().second; }
};

/// Total energy, residual and tangent of the discretized hyperelastic body.
/// The state vector holds 2 dofs per node (x then y); prescribed entries are
/// taken as-is from the state.
class HyperelasticProblem {
public:
    explicit HyperelasticProblem(const HeteroMesh& mesh) : mesh_(mesh) {
        precompute_geometry();
        build_pattern();
    }

    const HeteroMesh& mesh() const { return mesh_; }
    int n_free() const { return mesh_.n_free; }

    /// Sum of element energies; +inf if any quadrature point is inverted.
    double energy(const Eigen::VectorXd& u, int* inverted_element = nullptr) const {
        double total = 0.0;
        const int npe = mesh_.nodes_per_element();
        for (int e = 0; e < mesh_.n_elements(); ++e) {
            const auto& mat = mesh_.material_of(e);
            const auto& conn = mesh_.elements[e];
            for (int q = 0; q < nq_; ++q) {
                const auto F = deformation_gradient(u, e, q, conn, npe);
                const double psi = plane_strain_energy(F, mat.lame_lambda, mat.lame_mu);
                if (!std::isfinite(psi)) {
                    if (inverted_element) *inverted_element = e;
                    return INFINITY;
                }
                total += weight(e, q) * psi;
            }
        }
        return total;
    }

    /// Internal force vector over all dofs (2 per node).
    Eigen::VectorXd full_residual(const Eigen::VectorXd& u) const {
        Eigen::VectorXd r = Eigen::VectorXd::Zero(u.size());
        assemble(u, &r, nullptr);
        return r;
    }

    /// Residual restricted to free dofs.
    Eigen::VectorXd residual(const Eigen::VectorXd& u) const {
        const Eigen::VectorXd full = full_residual(u);
        Eigen::VectorXd out(mesh_.n_free);
        for (std::size_t d = 0; d < mesh_.free_dof.size(); ++d)
            if (mesh_.free_dof[d] >= 0) out[mesh_.free_dof[d]] = full[static_cast<Eigen::Index>(d)];
        return out;
    }

    /// Free-dof residual and lower triangle of the free-dof tangent.
    void residual_and_tangent(const Eigen::VectorXd& u, Eigen::VectorXd& r_free,
                              Eigen::SparseMatrix<double>& k_lower) const {
        Eigen::VectorXd full = Eigen::VectorXd::Zero(u.size());
        k_lower = pattern_;
        std::fill(k_lower.valuePtr(), k_lower.valuePtr() + k_lower.nonZeros(), 0.0);
        assemble(u, &full, &k_lower);
        r_free.resize(mesh_.n_free);
        for (std::size_t d = 0; d < mesh_.free_dof.size(); ++d)
            if (mesh_.free_dof[d] >= 0) r_free[mesh_.free_dof[d]] = full[static_cast<Eigen::Index>(d)];
    }

    const Eigen::SparseMatrix<double>& sparsity() const { return pattern_; }

    /// Adds a free-dof increment into the full state.
    void add_free(Eigen::VectorXd& u, const Eigen::VectorXd& delta, double alpha) const {
        for (std::size_t d = 0; d < mesh_.free_dof.size(); ++d)
            if (mesh_.free_dof[d] >= 0) u[static_cast<Eigen::Index>(d)] += alpha * delta[mesh_.free_dof[d]];
    }

private:
    // Reference-triangle quadrature.
    static constexpr std::array<std::array<double, 3>, 3> kQuad3{{{1.0 / 6, 1.0 / 6, 1.0 / 6},
                                                                   {2.0 / 3, 1.0 / 6, 1.0 / 6},
                                                                   {1.0 / 6, 2.0 / 3, 1.0 / 6}}};

    static void shape_gradients(int order, double xi, double eta, double dN[6][2]) {
        if (order == 1) {
            dN[0][0] = -1; dN[0][1] = -1;
            dN[1][0] = 1;  dN[1][1] = 0;
            dN[2][0] = 0;  dN[2][1] = 1;
            return;
        }
        const double l1 = 1.0 - xi - eta;
        // d/dxi, d/deta of L1 = (-1,-1), L2 = (1,0), L3 = (0,1)
        dN[0][0] = -(4 * l1 - 1); dN[0][1] = -(4 * l1 - 1);
        dN[1][0] = 4 * xi - 1;     dN[1][1] = 0;
        dN[2][0] = 0;              dN[2][1] = 4 * eta - 1;
        dN[3][0] = 4 * (l1 - xi);  dN[3][1] = -4 * xi;          // 4 L1 L2
        dN[4][0] = 4 * eta;        dN[4][1] = 4 * xi;           // 4 L2 L3
        dN[5][0] = -4 * eta;       dN[5][1] = 4 * (l1 - eta);   // 4 L3 L1
    }

    void precompute_geometry() {
        const int npe = mesh_.nodes_per_element();
        nq_ = mesh_.order == 1 ? 1 : 3;
        const int ne = mesh_.n_elements();
        grads_.resize(static_cast<std::size_t>(ne) * nq_ * npe * 2);
        weights_.resize(static_cast<std::size_t>(ne) * nq_);
        for (int e = 0; e < ne; ++e) {
            const auto& c = mesh_.elements[e];
            const Eigen::Vector2d x0 = mesh_.node_xy(c[0]), x1 = mesh_.node_xy(c[1]), x2 = mesh_.node_xy(c[2]);
            Eigen::Matrix2d jac;
            jac.col(0) = x1 - x0;
            jac.col(1) = x2 - x0;
            const double detj = jac.determinant();
            const Eigen::Matrix2d jinv = jac.inverse();
            for (int q = 0; q < nq_; ++q) {
                double xi = 1.0 / 3, eta = 1.0 / 3, w = 0.5;
                if (nq_ == 3) {
                    xi = kQuad3[q][0];
                    eta = kQuad3[q][1];
                    w = kQuad3[q][2];
                }
                double dN[6][2];
                shape_gradients(mesh_.order, xi, eta, dN);
                for (int a = 0; a < npe; ++a) {
                    // dN/dX = J^-T dN/dxi
                    const double gx = jinv(0, 0) * dN[a][0] + jinv(1, 0) * dN[a][1];
                    const double gy = jinv(0, 1) * dN[a][0] + jinv(1, 1) * dN[a][1];
                    grads_[grad_index(e, q, a)] = gx;
                    grads_[grad_index(e, q, a) + 1] = gy;
                }
                weights_[static_cast<std::size_t>(e) * nq_ + q] = w * detj;
            }
        }
    }

    std::size_t grad_index(int e, int q, int a) const {
        const int npe = mesh_.nodes_per_element();
        return ((static_cast<std::size_t>(e) * nq_ + q) * npe + a) * 2;
    }
    double weight(int e, int q) const { return weights_[static_cast<std::size_t>(e) * nq_ + q]; }

    Eigen::Matrix2d deformation_gradient(const Eigen::VectorXd& u, int e, int q, const std::array<int, 6>& conn,
                                         int npe) const {
        Eigen::Matrix2d F = Eigen::Matrix2d::Identity();
        for (int a = 0; a < npe; ++a) {
            const double* g = &grads_[grad_index(e, q, a)];
            const double ux = u[2 * conn[a]], uy = u[2 * conn[a] + 1];
            F(0, 0) += ux * g[0];
            F(0, 1) += ux * g[1];
            F(1, 0) += uy * g[0];
            F(1, 1) += uy * g[1];
        }
        return F;
    }

    void build_pattern() {
        const int npe = mesh_.nodes_per_element();
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(static_cast<std::size_t>(mesh_.n_elements()) * (2 * npe) * (2 * npe) / 2 + 16);
        for (const auto& conn : mesh_.elements)
            for (int a = 0; a < 2 * npe; ++a) {
                const int ra = mesh_.free_dof[2 * conn[a / 2] + a % 2];
                if (ra < 0) continue;
                for (int b = 0; b < 2 * npe; ++b) {
                    const int cb = mesh_.free_dof[2 * conn[b / 2] + b % 2];
                    if (cb < 0 || ra < cb) continue;
                    trip.emplace_back(ra, cb, 0.0);
                }
            }
        pattern_.resize(mesh_.n_free, mesh_.n_free);
        pattern_.setFromTriplets(trip.begin(), trip.end());
        pattern_.makeCompressed();
        // Scatter map: element-local (a, b) -> position in the value array.
        scatter_.assign(static_cast<std::size_t>(mesh_.n_elements()) * (2 * npe) * (2 * npe), -1);
        const int* outer = pattern_.outerIndexPtr();
        const int* inner = pattern_.innerIndexPtr();
        for (int e = 0; e < mesh_.n_elements(); ++e) {
            const auto& conn = mesh_.elements[e];
            for (int a = 0; a < 2 * npe; ++a) {
                const int ra = mesh_.free_dof[2 * conn[a / 2] + a % 2];
                if (ra < 0) continue;
                for (int b = 0; b < 2 * npe; ++b) {
                    const int cb = mesh_.free_dof[2 * conn[b / 2] + b % 2];
                    if (cb < 0 || ra < cb) continue;
                    const int* first = inner + outer[cb];
                    const int* last = inner + outer[cb + 1];
                    const int* pos = std::lower_bound(first, last, ra);
                    scatter_[(static_cast<std::size_t>(e) * 2 * npe + a) * 2 * npe + b] =
                        static_cast<int>(pos - inner);
                }
            }
        }
    }

    void assemble(const Eigen::VectorXd& u, Eigen::VectorXd* r_full, Eigen::SparseMatrix<double>* k_lower) const {
        const int npe = mesh_.nodes_per_element();
        const int nd = 2 * npe;
        double* kval = k_lower ? k_lower->valuePtr() : nullptr;
        double ke[12][12];
        double re[12];
        for (int e = 0; e < mesh_.n_elements(); ++e) {
            const auto& mat = mesh_.material_of(e);
            const auto& conn = mesh_.elements[e];
            for (int i = 0; i < nd; ++i) {
                re[i] = 0.0;
                if (kval)
                    for (int j = 0; j < nd; ++j) ke[i][j] = 0.0;
            }
            for (int q = 0; q < nq_; ++q) {
                const auto F = deformation_gradient(u, e, q, conn, npe);
                const double det = F.determinant();
                if (!(det > 0.0)) throw InversionError(e, det);
                const auto st = plane_strain_response(F, mat.lame_lambda, mat.lame_mu, kval != nullptr);
                const double w = weight(e, q);
                for (int a = 0; a < npe; ++a) {
                    const double* ga = &grads_[grad_index(e, q, a)];
                    for (int i = 0; i < 2; ++i) re[2 * a + i] += w * (st.P(i, 0) * ga[0] + st.P(i, 1) * ga[1]);
                }
                if (kval) {
                    for (int a = 0; a < npe; ++a) {
                        const double* ga = &grads_[grad_index(e, q, a)];
                        for (int b = 0; b < npe; ++b) {
                            const double* gb = &grads_[grad_index(e, q, b)];
                            for (int i = 0; i < 2; ++i)
                                for (int k = 0; k < 2; ++k) {
                                    double v = 0.0;
                                    for (int J = 0; J < 2; ++J)
                                        for (int L = 0; L < 2; ++L) v += ga[J] * st.tangent(2 * i + J, 2 * k + L) * gb[L];
                                    ke[2 * a + i][2 * b + k] += w * v;
                                }
                        }
                    }
                }
            }
            for (int a = 0; a < nd; ++a) (*r_full)[2 * conn[a / 2] + a % 2] += re[a];
            if (kval) {
                const int* sc = &scatter_[static_cast<std::size_t>(e) * nd * nd];
                for (int a = 0; a < nd; ++a)
                    for (int b = 0; b < nd; ++b) {
                        const int pos = sc[a * nd + b];
                        if (pos >= 0) kval[pos] += ke[a][b];
                    }
            }
        }
    }

    const HeteroMesh& mesh_;
    int nq_ = 1;
    std::vector<double> grads_;
    std::vector<double> weights_;
    Eigen::SparseMatrix<double> pattern_;
    std::vector<int> scatter_;
};

/// Equibiaxial boundary displacement: every boundary node moves to
/// u = d (X - 1/2, Y - 1/2), i.e. each face moves outward by d/2.
inline Eigen::Vector2d equibiaxial_displacement(const Eigen::Vector2d& X, double d) {
    return {d * (X.x() - 0.5), d * (X.y() - 0.5)};
}

namespace detail {

/// Bilinear sample of nodal displacements at 64 x 64 cell centers.
inline std::vector<double> sample_displacement(const HeteroMesh& mesh, const Eigen::VectorXd& u) {
    constexpr int n = kPatternSide;
    std::vector<double> out(static_cast<std::size_t>(n) * n * 2);
    const int L = mesh.lattice;
    const double span = L - 1;
    for (int r = 0; r < n; ++r) {
        const double y = 1.0 - (r + 0.5) / n;
        for (int c = 0; c < n; ++c) {
            const double x = (c + 0.5) / n;
            const double fx = x * span, fy = y * span;
            int a = std::min(static_cast<int>(fx), L - 2);
            int b = std::min(static_cast<int>(fy), L - 2);
            const double tx = fx - a, ty = fy - b;
            for (int comp = 0; comp < 2; ++comp) {
                const double v00 = u[2 * mesh.node_id(a, b) + comp];
                const double v10 = u[2 * mesh.node_id(a + 1, b) + comp];
                const double v01 = u[2 * mesh.node_id(a, b + 1) + comp];
                const double v11 = u[2 * mesh.node_id(a + 1, b + 1) + comp];
                out[(static_cast<std::size_t>(r) * n + c) * 2 + comp] =
                    (1 - tx) * (1 - ty) * v00 + tx * (1 - ty) * v10 + (1 - tx) * ty * v01 + tx * ty * v11;
            }
        }
    }
    return out;
}

}  // namespace detail

/// Newton continuation driver for one mesh.
class EquibiaxialSolver {
public:
    EquibiaxialSolver(const HeteroMesh& mesh, const FidelityProfile& profile)
        : mesh_(mesh), profile_(profile), problem_(mesh) {
        profile_.validate_common();
        llt_.analyzePattern(problem_.sparsity());
    }

    HyperelasticProblem& problem() { return problem_; }

    /// State with boundary dofs set for displacement d and interior from `u`.
    void apply_boundary(Eigen::VectorXd& u, double d) const {
        for (const auto& face : mesh_.boundary)
            for (int id : face) {
                const auto v = equibiaxial_displacement(mesh_.node_xy(id), d);
                u[2 * id] = v.x();
                u[2 * id + 1] = v.y();
            }
    }

    SimRecord run(const std::string& pattern_id = {}) {
        const auto t0 = std::chrono::steady_clock::now();
        SimRecord rec;
        rec.pattern_id = pattern_id;
        rec.fidelity = profile_.name;
        Eigen::VectorXd u = Eigen::VectorXd::Zero(2 * mesh_.n_nodes());
        double d_prev = 0.0;
        for (double d : profile_.displacement_program) {
            if (d > 0.0) {
                const int n_sub = profile_.n_load_substeps_per_d;
                const double d_start = d_prev;
                for (int s = 1; s <= n_sub; ++s) {
                    const double target = d_start + (d - d_start) * s / n_sub;
                    advance(u, d_prev, target, 0);
                    d_prev = target;
                }
            }
            record(rec, u, d);
        }
        rec.displacement_field = detail::sample_displacement(mesh_, u);
        rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return rec;
    }

    int newton_iterations() const { return newton_iters_; }

private:
    void record(SimRecord& rec, const Eigen::VectorXd& u, double d) {
        int bad = -1;
        const double e = problem_.energy(u, &bad);
        if (!std::isfinite(e)) throw InversionError(bad, 0.0);
        rec.delta_psi.emplace_back(d, e);  // reference energy is exactly 0
        const Eigen::VectorXd r = problem_.full_residual(u);
        double fx = 0.0, fy = 0.0;
        for (int id : mesh_.boundary[static_cast<int>(Face::right)]) fx += r[2 * id];
        for (int id : mesh_.boundary[static_cast<int>(Face::top)]) fy += r[2 * id + 1];
        rec.reaction_fx.push_back(fx);
        rec.reaction_fy.push_back(fy);
    }

    /// Moves from converged state at d_from to d_to, bisecting on failure.
    void advance(Eigen::VectorXd& u, double d_from, double d_to, int level) {
        Eigen::VectorXd trial = u;
        if (d_from > 0.0) {
            trial *= d_to / d_from;  // boundary data scales linearly in d
        } else {
            for (int id = 0; id < mesh_.n_nodes(); ++id) {
                const auto v = equibiaxial_displacement(mesh_.node_xy(id), d_to);
                trial[2 * id] = v.x();
                trial[2 * id + 1] = v.y();
            }
        }
        if (!std::isfinite(problem_.energy(trial))) {
            trial = u;
            apply_boundary(trial, d_to);
        }
        std::string why;
        if (newton(trial, why)) {
            u = std::move(trial);
            return;
        }
        if (level >= profile_.max_bisections) throw ConvergenceError(d_from, why);
        const double mid = 0.5 * (d_from + d_to);
        advance(u, d_from, mid, level + 1);
        advance(u, mid, d_to, level + 1);
    }

    /// Damped Newton on the free dofs. Converged when the Newton decrement
    /// -R.du is at most newton_tol times the current total energy.
    bool newton(Eigen::VectorXd& u, std::string& why) {
        int bad = -1;
        double energy = problem_.energy(u, &bad);
        if (!std::isfinite(energy)) {
            why = "element " + std::to_string(bad) + " inverted at the initial guess";
            return false;
        }
        Eigen::VectorXd r;
        Eigen::SparseMatrix<double> k;
        for (int it = 0; it < profile_.max_newton_iters; ++it) {
            ++newton_iters_;
            problem_.residual_and_tangent(u, r, k);
            if (r.size() == 0) return true;
            llt_.factorize(k);
            if (llt_.info() != Eigen::Success) {
                why = "tangent not positive definite";
                return false;
            }
            const Eigen::VectorXd du = llt_.solve(-r);
            const double decrement = -r.dot(du);
            double alpha = 1.0;
            bool accepted = false;
            for (int ls = 0; ls < 20; ++ls) {
                Eigen::VectorXd cand = u;
                problem_.add_free(cand, du, alpha);
                const double e_new = problem_.energy(cand);
                // Armijo on energy, with slack for round-off once the decrement
                // is below energy precision.
                if (std::isfinite(e_new) &&
                    e_new <= energy - 1e-4 * alpha * decrement + 1e-12 * std::abs(energy)) {
                    u = std::move(cand);
                    energy = e_new;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if (!accepted) {
                why = "line search failed";
                return false;
            }
            if (decrement <= profile_.newton_tol * std::max(energy, 1e-300)) return true;
        }
        why = "iteration limit reached";
        return false;
    }

    const HeteroMesh& mesh_;
    FidelityProfile profile_;
    HyperelasticProblem problem_;
#ifdef HETMECH_HAVE_CHOLMOD
    Eigen::CholmodSupernodalLLT<Eigen::SparseMatrix<double>, Eigen::Lower> llt_;
#else
    Eigen::SimplicialLLT<Eigen::SparseMatrix<double>, Eigen::Lower> llt_;
#endif
    int newton_iters_ = 0;
};

/// Runs the profile's displacement program on `mesh`.
inline SimRecord solve_equibiaxial(const HeteroMesh& mesh, const FidelityProfile& profile,
                                   const std::string& pattern_id = {}) {
    EquibiaxialSolver solver(mesh, profile);
    return solver.run(pattern_id);
}

inline SimRecord simulate_pattern(const Pattern& pattern, const FidelityProfile& profile,
                                  const std::string& pattern_id = {}) {
    return solve_equibiaxial(build_mesh(pattern, profile), profile, pattern_id);
}

/// Final Delta Psi for the all-soft body, the pattern, and the all-stiff body.
inline std::tuple<double, double, double> strain_energy_bounds_check(const Pattern& pattern,
                                                                     const FidelityProfile& profile) {
    const double soft = simulate_pattern(Pattern::filled(0), profile).final_delta_psi();
    const double het = simulate_pattern(pattern, profile).final_delta_psi();
    const double stiff = simulate_pattern(Pattern::filled(1), profile).final_delta_psi();
    return {soft, het, stiff};
}

}  // namespace hetmech::fea
