#pragma once

// Method-of-moments optimizer: given moment data (means, covariance Gamma,
// derivative vector D) produce the sensitivity M = D^T Gamma^-1 D and the
// optimal linear combination m = eta Gamma^-1 D of photon counts, plus the
// single-observable sensitivity chi^-2 for arbitrary coefficients.

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "superres/demux_model.hpp"
#include "superres/errors.hpp"

namespace superres {

struct SensitivityResult {
    double m_value = 0.0;      // M, length^-2
    Eigen::VectorXd coeffs;    // optimal m, unit 2-norm
    double eta = 0.0;          // normalization, coeffs = eta * Gamma^-1 D
    double condition = 0.0;    // eigenvalue ratio of Gamma (indicator only)
};

namespace detail {

// Solve Gamma y = d without forming the inverse. LDLT first; if its residual
// is poor (Gamma gets very ill-conditioned at small separations) retry with a
// column-pivoted QR. No regularization is ever added: a singular Gamma is the
// caller's problem to hear about, not to have papered over.
inline Eigen::VectorXd solve_spd(const Eigen::MatrixXd& gamma, const Eigen::VectorXd& d,
                                 double* condition_out) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gamma, Eigen::EigenvaluesOnly);
    double cond = std::numeric_limits<double>::infinity();
    double eig_min = 0.0, eig_max = 0.0;
    if (eig.info() == Eigen::Success) {
        eig_min = eig.eigenvalues().minCoeff();
        eig_max = eig.eigenvalues().maxCoeff();
        if (eig_min > 0.0) cond = eig_max / eig_min;
    }
    if (condition_out) *condition_out = cond;

    // A PSD covariance with an exactly zero diagonal entry has an identically
    // zero row: structurally singular (a dark mode nobody reduced away), not
    // merely ill-conditioned. A factorization can still produce a consistent
    // solution for such systems, so catch the exact case before solving.
    for (Eigen::Index i = 0; i < gamma.rows(); ++i)
        if (gamma(i, i) == 0.0) {
            std::vector<double> dir(static_cast<std::size_t>(gamma.rows()), 0.0);
            dir[static_cast<std::size_t>(i)] = 1.0;
            throw SingularCovariance(
                "covariance diagonal entry " + std::to_string(i) +
                    " is exactly zero (structurally dark mode); reduce degenerate modes first",
                std::move(dir));
        }

    const double dnorm = d.norm();
    auto residual_ok = [&](const Eigen::VectorXd& y) {
        return (gamma * y - d).norm() <= 1e-8 * (dnorm + gamma.norm() * y.norm());
    };

    Eigen::LDLT<Eigen::MatrixXd> ldlt(gamma);
    if (ldlt.info() == Eigen::Success) {
        Eigen::VectorXd y = ldlt.solve(d);
        if (y.allFinite() && residual_ok(y)) return y;
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(gamma);
    Eigen::VectorXd y = qr.solve(d);
    if (y.allFinite() && residual_ok(y)) return y;

    // Report the direction along which Gamma is (numerically) singular.
    std::vector<double> null_dir;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> full(gamma);
    if (full.info() == Eigen::Success) {
        const Eigen::VectorXd v = full.eigenvectors().col(0);
        null_dir.assign(v.data(), v.data() + v.size());
    }
    throw SingularCovariance("covariance solve failed: Gamma is singular or too "
                             "ill-conditioned for a reliable solve",
                             std::move(null_dir));
}

} // namespace detail

// M = D^T Gamma^-1 D, coeffs proportional to Gamma^-1 D with unit 2-norm and
// the largest-magnitude entry made positive. D = 0 short-circuits to M = 0.
inline SensitivityResult sensitivity(const MomentData& md) {
    SensitivityResult res;
    const auto n = md.deriv.size();
    res.coeffs = Eigen::VectorXd::Zero(n);
    if (md.deriv.isZero(0.0)) {
        double cond = 0.0;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(md.cov, Eigen::EigenvaluesOnly);
        if (eig.info() == Eigen::Success && eig.eigenvalues().minCoeff() > 0.0)
            cond = eig.eigenvalues().maxCoeff() / eig.eigenvalues().minCoeff();
        res.condition = cond;
        return res;
    }

    const Eigen::VectorXd y = detail::solve_spd(md.cov, md.deriv, &res.condition);
    res.m_value = md.deriv.dot(y);

    const double ynorm = y.norm();
    if (ynorm > 0.0) {
        Eigen::VectorXd c = y / ynorm;
        Eigen::Index imax = 0;
        c.cwiseAbs().maxCoeff(&imax);
        double sign = (c[imax] < 0.0) ? -1.0 : 1.0;
        res.coeffs = sign * c;
        res.eta = sign / ynorm;
    }
    return res;
}

// chi^-2 for a fixed linear combination of counts: (m^T D)^2 / (m^T Gamma m).
inline double chi_squared_inverse(const MomentData& md, const Eigen::VectorXd& coeffs) {
    if (coeffs.size() != md.deriv.size())
        throw DimensionMismatch("chi_squared_inverse: got " + std::to_string(coeffs.size()) +
                                " coefficients for " + std::to_string(md.deriv.size()) + " modes");
    const double var = coeffs.dot(md.cov * coeffs);
    if (var == 0.0)
        throw ZeroVariance("chi_squared_inverse: coefficients have zero variance under Gamma");
    const double slope = coeffs.dot(md.deriv);
    return slope * slope / var;
}

inline constexpr double condition_warn_threshold = 1e12;

} // namespace superres
