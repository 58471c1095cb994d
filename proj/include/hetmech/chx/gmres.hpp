#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

namespace hetmech::chx {

struct GmresResult {
    int iterations = 0;
    double relative_residual = 0.0;
    bool converged = false;
};

/// Krylov storage reused across solves of the same size.
struct GmresWorkspace {
    std::vector<Eigen::VectorXd> basis, precond;
    Eigen::MatrixXd hess;
    Eigen::VectorXd cs, sn, g, r, w;

    void reserve(Eigen::Index n, int restart) {
        if (static_cast<int>(precond.size()) == restart && r.size() == n) return;
        basis.assign(restart + 1, Eigen::VectorXd(n));
        precond.assign(restart, Eigen::VectorXd(n));
        hess.resize(restart + 1, restart);
        cs.resize(restart);
        sn.resize(restart);
        g.resize(restart + 1);
        r.resize(n);
        w.resize(n);
    }
};

/// Restarted, right-preconditioned GMRES(m) with modified Gram-Schmidt.
/// `apply(v, out)` computes out = A v; `precondition(v, out)` computes out = P^-1 v.
/// Solves A x = b starting from x = 0.
template <class Apply, class Precondition>
GmresResult gmres(Apply&& apply, Precondition&& precondition, const Eigen::VectorXd& b,
                  Eigen::VectorXd& x, double rtol, int restart, int max_iters, GmresWorkspace& ws) {
    const Eigen::Index n = b.size();
    x.setZero(n);
    GmresResult res;
    const double bnorm = b.norm();
    if (bnorm == 0.0) {
        res.converged = true;
        return res;
    }
    ws.reserve(n, restart);
    auto& basis = ws.basis;
    auto& precond = ws.precond;
    auto& hess = ws.hess;
    auto& cs = ws.cs;
    auto& sn = ws.sn;
    auto& g = ws.g;
    auto& r = ws.r;
    auto& w = ws.w;

    while (res.iterations < max_iters) {
        if (res.iterations == 0) {
            r = b;  // x = 0
        } else {
            apply(x, w);
            r = b - w;
        }
        double beta = r.norm();
        res.relative_residual = beta / bnorm;
        if (res.relative_residual <= rtol) {
            res.converged = true;
            return res;
        }
        basis[0] = r / beta;
        g.setZero();
        g(0) = beta;
        hess.setZero();
        int j = 0;
        for (; j < restart && res.iterations < max_iters; ++j) {
            ++res.iterations;
            precondition(basis[j], precond[j]);
            apply(precond[j], w);
            for (int i = 0; i <= j; ++i) {
                hess(i, j) = w.dot(basis[i]);
                w -= hess(i, j) * basis[i];
            }
            hess(j + 1, j) = w.norm();
            if (hess(j + 1, j) > 0.0) basis[j + 1] = w / hess(j + 1, j);
            for (int i = 0; i < j; ++i) {
                const double t = cs(i) * hess(i, j) + sn(i) * hess(i + 1, j);
                hess(i + 1, j) = -sn(i) * hess(i, j) + cs(i) * hess(i + 1, j);
                hess(i, j) = t;
            }
            const double denom = std::hypot(hess(j, j), hess(j + 1, j));
            cs(j) = hess(j, j) / denom;
            sn(j) = hess(j + 1, j) / denom;
            hess(j, j) = denom;
            hess(j + 1, j) = 0.0;
            g(j + 1) = -sn(j) * g(j);
            g(j) = cs(j) * g(j);
            res.relative_residual = std::abs(g(j + 1)) / bnorm;
            if (res.relative_residual <= rtol) {
                ++j;
                break;
            }
        }
        const Eigen::VectorXd y = hess.topLeftCorner(j, j)
                                .triangularView<Eigen::Upper>()
                                .solve(g.head(j));
        for (int i = 0; i < j; ++i) x += y(i) * precond[i];
        if (res.relative_residual <= rtol) {
            res.converged = true;
            return res;
        }
    }
    return res;
}

}  // namespace hetmech::chx
