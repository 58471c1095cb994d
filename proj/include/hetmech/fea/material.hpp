#pragma once

#include <cmath>
#include <utility>

#include <Eigen/Dense>

#include "hetmech/common/error.hpp"

namespace hetmech::fea {

struct MaterialParams {
    double E = 1.0;
    double nu = 0.3;
    double lame_lambda = 0.0;
    double lame_mu = 0.0;
};

/// (lambda, mu) from Young's modulus and Poisson's ratio.
inline std::pair<double, double> lame_from_E_nu(double E, double nu) {
    if (!(E > 0.0)) throw ConfigError("E", "Young's modulus must be > 0");
    if (nu >= 0.5) throw ConfigError("nu", "nu >= 0.5 is incompressible; this model needs nu < 0.5");
    if (!(nu > -1.0)) throw ConfigError("nu", "must be > -1");
    const double lambda = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
    const double mu = E / (2.0 * (1.0 + nu));
    return {lambda, mu};
}

inline MaterialParams make_material(double E, double nu) {
    auto [lambda, mu] = lame_from_E_nu(E, nu);
    return {E, nu, lambda, mu};
}

/// Compressible Neo-Hookean stored energy
///   mu/2 [F:F - 3 - 2 ln J] + lambda/2 [(J^2 - 1)/2 - ln J].
inline double energy_density(const Eigen::Matrix3d& F, const MaterialParams& mat) {
    const double J = F.determinant();
    if (!(J > 0.0)) throw InversionError(J);
    const double lnJ = std::log(J);
    return 0.5 * mat.lame_mu * (F.squaredNorm() - 3.0 - 2.0 * lnJ) +
           0.5 * mat.lame_lambda * (0.5 * (J * J - 1.0) - lnJ);
}

/// Plane-strain evaluation for an in-plane gradient F (F33 = 1): energy, first
/// Piola-Kirchhoff stress and the material tangent dP/dF.
struct PlaneStrainState {
    double psi = 0.0;
    Eigen::Matrix2d P;
    // tangent(2*i + J, 2*k + L) = dP_iJ / dF_kL
    Eigen::Matrix4d tangent;
};

/// Energy only; returns +inf when det F <= 0.
inline double plane_strain_energy(const Eigen::Matrix2d& F, double lambda, double mu) {
    const double J = F.determinant();
    if (!(J > 0.0)) return INFINITY;
    const double lnJ = std::log(J);
    return 0.5 * mu * (F.squaredNorm() + 1.0 - 3.0 - 2.0 * lnJ) + 0.5 * lambda * (0.5 * (J * J - 1.0) - lnJ);
}

inline PlaneStrainState plane_strain_response(const Eigen::Matrix2d& F, double lambda, double mu,
                                              bool with_tangent) {
    PlaneStrainState s;
    const double J = F.determinant();
    const double lnJ = std::log(J);
    s.psi = 0.5 * mu * (F.squaredNorm() - 2.0 - 2.0 * lnJ) + 0.5 * lambda * (0.5 * (J * J - 1.0) - lnJ);
    const Eigen::Matrix2d Finv = F.inverse();
    const Eigen::Matrix2d FinvT = Finv.transpose();
    const double c1 = 0.5 * lambda * (J * J - 1.0);
    s.P = mu * (F - FinvT) + c1 * FinvT;
    if (with_tangent) {
        const double c2 = mu - c1;
        const double c3 = lambda * J * J;
        for (int i = 0; i < 2; ++i)
            for (int Jx = 0; Jx < 2; ++Jx)
                for (int k = 0; k < 2; ++k)
                    for (int L = 0; L < 2; ++L) {
                        double v = c2 * Finv(Jx, k) * Finv(L, i) + c3 * Finv(Jx, i) * Finv(L, k);
                        if (i == k && Jx == L) v += mu;
                        s.tangent(2 * i + Jx, 2 * k + L) = v;
                    }
    }
    return s;
}

}  // namespace hetmech::fea
