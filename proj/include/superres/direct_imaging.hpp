#pragma once

// Pixelized direct imaging of the two thermal sources: per-pixel intensities,
// their d-derivatives, the rank-3 covariance structure Gamma = diag(I) + UU^T
// and the optimized sensitivity through the 3x3 Woodbury core.
//
// All pixel quantities are products of 1D Gaussian masses over the pixel
// edges, derived from
//   Phi_ij = int_pixel |u0(r + r0)|^2,     paired with (1 + gamma) N kappa,
//   Psi_ij = int_pixel |u0(r - r0)|^2,     paired with (1 - gamma) N kappa,
//   Xi_ij  = exp(-d^2/2w^2) int_pixel |u0(r)|^2,
// with u0 the Gaussian PSF of waist w and r0 = (d/2)(cos t, sin t).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "superres/errors.hpp"
#include "superres/moments_engine.hpp"
#include "superres/scene.hpp"

namespace superres {

// Square detector of side 2 * half_side, n_p segments per axis.
struct PixelGrid {
    int n_p;
    double half_side;

    PixelGrid(int segments, double half) : n_p(segments), half_side(half) {
        if (n_p < 1) throw DomainError("PixelGrid: need at least one pixel per axis");
        if (!(half_side > 0.0)) throw DomainError("PixelGrid: half side must be > 0");
    }
    // Default detector: side 6w.
    static PixelGrid standard(const Scene& scene, int segments = 50) {
        return PixelGrid(segments, 3.0 * scene.waist());
    }

    std::size_t pixel_count() const {
        return static_cast<std::size_t>(n_p) * static_cast<std::size_t>(n_p);
    }
    double center(int i) const { return -half_side + (2.0 * i + 1.0) * half_pixel(); }
    double half_pixel() const { return half_side / n_p; }
};

struct DirectImagingMoments {
    PixelGrid grid;
    Eigen::MatrixXd phi, psi, xi;
    Eigen::MatrixXd dphi, dpsi;
    Eigen::MatrixXd intensities;  // I_ij photons per pixel
    Eigen::MatrixXd deriv;        // dI_ij/dd
    Eigen::MatrixXd lowrank_u;    // N_p^2 x 3, flattened k = i*n_p + j
};

namespace detail {

// Mass and shift-derivative of a unit Gaussian intensity exp(-2(t+shift)^2/w^2)
// over [lo, hi]: mass = (1/2)[erf(z_hi) - erf(z_lo)], z = sqrt(2)(t+shift)/w.
struct EdgeMass {
    double mass;
    double dmass_dshift;
};

inline EdgeMass gaussian_pixel_mass(double lo, double hi, double shift, double w) {
    const double s2 = std::sqrt(2.0);
    const double z_lo = s2 * (lo + shift) / w;
    const double z_hi = s2 * (hi + shift) / w;
    EdgeMass e;
    e.mass = 0.5 * (std::erf(z_hi) - std::erf(z_lo));
    e.dmass_dshift = (std::exp(-z_hi * z_hi) - std::exp(-z_lo * z_lo)) *
                     std::sqrt(2.0 / 3.141592653589793238462643383279502884) / w;
    return e;
}

} // namespace detail

inline DirectImagingMoments pixel_overlaps(const Scene& scene, const PixelGrid& grid) {
    const int np = grid.n_p;
    const double w = scene.waist();
    const double hx = (scene.d() / 2.0) * scene.cos_theta();
    const double hy = (scene.d() / 2.0) * scene.sin_theta();
    const double xp = grid.half_pixel();
    const double delta = std::exp(-scene.d() * scene.d() / (2.0 * w * w));

    // 1D masses per axis position, for shifts +h (source at -r0), -h (source
    // at +r0) and 0 (the interference term), x and y independently.
    Eigen::VectorXd px_p(np), px_m(np), px_0(np), dpx_p(np), dpx_m(np);
    Eigen::VectorXd py_p(np), py_m(np), py_0(np), dpy_p(np), dpy_m(np);
    for (int i = 0; i < np; ++i) {
        const double c = grid.center(i);
        const auto xa = detail::gaussian_pixel_mass(c - xp, c + xp, hx, w);
        const auto xb = detail::gaussian_pixel_mass(c - xp, c + xp, -hx, w);
        const auto x0 = detail::gaussian_pixel_mass(c - xp, c + xp, 0.0, w);
        px_p[i] = xa.mass;
        px_m[i] = xb.mass;
        px_0[i] = x0.mass;
        dpx_p[i] = xa.dmass_dshift;
        dpx_m[i] = xb.dmass_dshift;
        const auto ya = detail::gaussian_pixel_mass(c - xp, c + xp, hy, w);
        const auto yb = detail::gaussian_pixel_mass(c - xp, c + xp, -hy, w);
        const auto y0 = detail::gaussian_pixel_mass(c - xp, c + xp, 0.0, w);
        py_p[i] = ya.mass;
        py_m[i] = yb.mass;
        py_0[i] = y0.mass;
        dpy_p[i] = ya.dmass_dshift;
        dpy_m[i] = yb.dmass_dshift;
    }

    const double nk = scene.n_kappa();
    const double g = scene.gamma();
    const double ct2 = scene.cos_theta() / 2.0;
    const double st2 = scene.sin_theta() / 2.0;

    DirectImagingMoments out{grid,
                             Eigen::MatrixXd(np, np), Eigen::MatrixXd(np, np),
                             Eigen::MatrixXd(np, np), Eigen::MatrixXd(np, np),
                             Eigen::MatrixXd(np, np), Eigen::MatrixXd(np, np),
                             Eigen::MatrixXd(np, np),
                             Eigen::MatrixXd(static_cast<Eigen::Index>(grid.pixel_count()), 3)};
    const double u1 = nk * std::sqrt(1.0 + g * g);
    const double u3 = nk * std::sqrt(2.0 * (1.0 - g * g));
    for (int i = 0; i < np; ++i)
        for (int j = 0; j < np; ++j) {
            const double phi = px_p[i] * py_p[j];
            const double psi = px_m[i] * py_m[j];
            // dr0x/dd = cos(t)/2; the +r0 source moves the shift - sign.
            const double dphi = ct2 * dpx_p[i] * py_p[j] + st2 * px_p[i] * dpy_p[j];
            const double dpsi = -ct2 * dpx_m[i] * py_m[j] - st2 * px_m[i] * dpy_m[j];
            out.phi(i, j) = phi;
            out.psi(i, j) = psi;
            out.xi(i, j) = delta * px_0[i] * py_0[j];
            out.dphi(i, j) = dphi;
            out.dpsi(i, j) = dpsi;
            out.intensities(i, j) = nk * (1.0 + g) * phi + nk * (1.0 - g) * psi;
            out.deriv(i, j) = nk * (1.0 + g) * dphi + nk * (1.0 - g) * dpsi;
            const auto k = static_cast<Eigen::Index>(i) * np + j;
            out.lowrank_u(k, 0) = u1 * phi;
            out.lowrank_u(k, 1) = u1 * psi;
            out.lowrank_u(k, 2) = u3 * out.xi(i, j);
        }
    return out;
}

// Far-corner pixels underflow to zero intensity and would contribute 0/0;
// they carry no photons, so they are dropped from the solve.
inline constexpr double di_intensity_floor = 1e-30;

// M = sum_ij (1/I_ij)(dI_ij/dd)^2 - D^T Lambda D through the 3x3 Woodbury
// core of Gamma = diag(I) + UU^T:
//   Gamma^-1 = J - JU (1_3 + U^T J U)^-1 U^T J,  J = diag(1/I),
// so with v = U^T J D the correction is v^T (1_3 + U^T J U)^-1 v. The full
// N_p^2 x N_p^2 matrix is never materialized.
inline SensitivityResult di_sensitivity(const Scene& scene, const PixelGrid& grid) {
    const DirectImagingMoments mom = pixel_overlaps(scene, grid);
    const int np = grid.n_p;
    const auto total = static_cast<Eigen::Index>(grid.pixel_count());

    std::vector<Eigen::Index> kept;
    kept.reserve(static_cast<std::size_t>(total));
    for (Eigen::Index k = 0; k < total; ++k) {
        const double ii = mom.intensities(k / np, k % np);
        if (ii > di_intensity_floor) kept.push_back(k);
    }

    const auto nkept = static_cast<Eigen::Index>(kept.size());
    Eigen::VectorXd jd(nkept), d(nkept), inv_i(nkept);
    Eigen::MatrixXd u(nkept, 3);
    double first_term = 0.0;
    double i_min = std::numeric_limits<double>::infinity(), i_max = 0.0;
    for (Eigen::Index r = 0; r < nkept; ++r) {
        const Eigen::Index k = kept[static_cast<std::size_t>(r)];
        const double ii = mom.intensities(k / np, k % np);
        const double dd = mom.deriv(k / np, k % np);
        d[r] = dd;
        inv_i[r] = 1.0 / ii;
        jd[r] = dd / ii;
        u.row(r) = mom.lowrank_u.row(k);
        first_term += dd * dd / ii;
        i_min = std::min(i_min, ii);
        i_max = std::max(i_max, ii);
    }

    Eigen::Matrix3d core = Eigen::Matrix3d::Identity() + u.transpose() * inv_i.asDiagonal() * u;
    Eigen::LDLT<Eigen::Matrix3d> ldlt(core);
    if (ldlt.info() != Eigen::Success)
        throw SingularCore("di_sensitivity: 3x3 Woodbury core is not invertible");
    const Eigen::Vector3d v = u.transpose() * jd;
    const Eigen::Vector3d sv = ldlt.solve(v);

    SensitivityResult res;
    res.m_value = first_term - v.dot(sv);
    res.condition = (nkept > 0 && i_min > 0.0)
                        ? (i_max + (u.transpose() * u).eigenvalues().real().maxCoeff()) / i_min
                        : std::numeric_limits<double>::infinity();

    // Optimal coefficients Gamma^-1 D = JD - JU core^-1 v, zero on dropped
    // pixels, unit norm, largest-magnitude entry positive.
    Eigen::VectorXd y = jd - inv_i.asDiagonal() * (u * sv);
    Eigen::VectorXd full = Eigen::VectorXd::Zero(total);
    for (Eigen::Index r = 0; r < nkept; ++r) full[kept[static_cast<std::size_t>(r)]] = y[r];
    const double norm = full.norm();
    if (norm > 0.0) {
        full /= norm;
        Eigen::Index imax = 0;
        full.cwiseAbs().maxCoeff(&imax);
        const double sign = (full[imax] < 0.0) ? -1.0 : 1.0;
        full *= sign;
        res.eta = sign / norm;
    }
    res.coeffs = std::move(full);
    return res;
}

// Small-separation expansion of the continuous-imaging sensitivity:
// M = (2Nk/w^2)(gamma^2 + 4x^2(2 - 5gamma^2 + 3gamma^4)) + O(x^4).
inline double di_small_separation(const Scene& scene) {
    const double nk = scene.n_kappa();
    const double w = scene.waist();
    const double x = scene.x();
    const double g2 = scene.gamma() * scene.gamma();
    return 2.0 * nk / (w * w) * (g2 + 4.0 * x * x * (2.0 - 5.0 * g2 + 3.0 * g2 * g2));
}

} // namespace superres
