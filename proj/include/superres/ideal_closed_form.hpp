#pragma once

// Closed forms for ideal Hermite-Gauss demultiplexing (no misalignment, no
// crosstalk, no dark counts): the analytic inverse covariance obtained from
// two Sherman-Morrison updates, the finite-Q sensitivity, the Q -> infinity
// asymptote, and the analytic optimal coefficients.
//
// With the basis centered between the sources, beta_nm(-r0) =
// (-1)^(n+m) beta_nm(r0), so everything reduces to sums over beta^2 at +r0:
//   A+- = 2/(1 +- gamma^2) + 2Nk sum beta^2
//   B   = 2Nk sum (-1)^(n+m) beta^2
//   F   = sum (n+m-x^2)^2 beta^2 / x^2
//   S1  = sum (-1)^(n+m) (n+m-x^2) beta^2 / x     (alternating)
//   S2  = sum (n+m-x^2) beta^2 / x                (plain)
// The alternating sums cancel heavily at large x, so all accumulation is done
// in long double regardless of Q.
//
// The coefficient formula is written in the source with S_+ and S_- whose
// identification with S1/S2 is ambiguous on its face; matching against the
// numerically computed Gamma^-1 D fixes S_+ = S1 (alternating), S_- = S2.

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "superres/errors.hpp"
#include "superres/hg_overlap.hpp"
#include "superres/scene.hpp"

namespace superres {

struct IdealIntermediates {
    double a_plus = 0.0;
    double a_minus = 0.0;
    double b = 0.0;
    double f_term = 0.0;
    double delta1 = 0.0;
    double delta2 = 0.0;
    double delta3 = 0.0;
    double s1 = 0.0;
    double s2 = 0.0;
};

namespace detail {

inline void require_separated(const Scene& scene, const char* who) {
    if (scene.d() == 0.0)
        throw DegenerateScene(std::string(who) +
                              ": d = 0 leaves a single source; the estimation problem is "
                              "not well posed");
}

struct IdealSums {
    long double sum_b2 = 0.0L;      // sum beta^2
    long double sum_b2_alt = 0.0L;  // sum (-1)^(n+m) beta^2
    long double f_times_x2 = 0.0L;  // sum (n+m-x^2)^2 beta^2
    long double s1_times_x = 0.0L;  // sum (-1)^(n+m) (n+m-x^2) beta^2
    long double s2_times_x = 0.0L;  // sum (n+m-x^2) beta^2
};

inline IdealSums ideal_sums(const Scene& scene, int q_max) {
    const long double x = static_cast<long double>(scene.x());
    const long double x2 = x * x;
    const long double tx2 = x2 * static_cast<long double>(scene.cos_theta()) *
                            static_cast<long double>(scene.cos_theta());
    const long double ty2 = x2 * static_cast<long double>(scene.sin_theta()) *
                            static_cast<long double>(scene.sin_theta());
    const long double ex = std::exp(-x2);

    IdealSums s;
    long double pn = 1.0L; // tx2^n / n!
    for (int n = 0; n <= q_max; ++n) {
        long double pm = 1.0L; // ty2^m / m!
        for (int m = 0; m <= q_max; ++m) {
            const long double b2 = ex * pn * pm;
            const long double t = static_cast<long double>(n + m) - x2;
            const long double sgn = ((n + m) % 2 == 0) ? 1.0L : -1.0L;
            s.sum_b2 += b2;
            s.sum_b2_alt += sgn * b2;
            s.f_times_x2 += t * t * b2;
            s.s1_times_x += sgn * t * b2;
            s.s2_times_x += t * b2;
            pm *= ty2 / static_cast<long double>(m + 1);
        }
        pn *= tx2 / static_cast<long double>(n + 1);
    }
    return s;
}

} // namespace detail

// Modes with beta_nm(r0) != 0; axis-aligned scenes drop an entire index
// family through the exact trig snapping in Scene.
inline ModeBasis ideal_active_modes(const Scene& scene, int q_max) {
    detail::require_separated(scene, "ideal_active_modes");
    const Misalignment none = Misalignment(0.0, 0.0);
    std::vector<std::pair<int, int>> act;
    for (int n = 0; n <= q_max; ++n)
        for (int m = 0; m <= q_max; ++m)
            if (beta(n, m, scene, none, SourceSign::plus) != 0.0) act.emplace_back(n, m);
    if (act.empty())
        throw DegenerateScene("ideal_active_modes: no mode has nonzero overlap");
    return ModeBasis(q_max, std::move(act));
}

inline IdealIntermediates ideal_intermediates(const Scene& scene, int q_max) {
    detail::require_separated(scene, "ideal_intermediates");
    const detail::IdealSums s = detail::ideal_sums(scene, q_max);
    const long double x = static_cast<long double>(scene.x());
    const long double nk = static_cast<long double>(scene.n_kappa());
    const long double g2 = static_cast<long double>(scene.gamma()) *
                           static_cast<long double>(scene.gamma());

    const long double a_plus = 2.0L / (1.0L + g2) + 2.0L * nk * s.sum_b2;
    const long double a_minus = 2.0L / (1.0L - g2) + 2.0L * nk * s.sum_b2;
    const long double b = 2.0L * nk * s.sum_b2_alt;
    const long double det = a_plus * a_minus - b * b;
    const long double s1 = s.s1_times_x / x;
    const long double s2 = s.s2_times_x / x;

    IdealIntermediates out;
    out.a_plus = static_cast<double>(a_plus);
    out.a_minus = static_cast<double>(a_minus);
    out.b = static_cast<double>(b);
    out.f_term = static_cast<double>(s.f_times_x2 / (x * x));
    out.s1 = static_cast<double>(s1);
    out.s2 = static_cast<double>(s2);
    out.delta1 = static_cast<double>(a_plus / det * s1 * s1);
    out.delta2 = static_cast<double>(-2.0L * b / det * s1 * s2);
    out.delta3 = static_cast<double>(a_minus / det * s2 * s2);
    return out;
}

// (Gamma^-1)_{nm,n'm'} = d_{nn'} d_{mm'} / (2Nk beta_nm^2)
//   - [(-1)^(n+m+n'+m') A+ - B((-1)^(n+m) + (-1)^(n'+m')) + A-] / (A+A- - B^2)
// over the active (nonzero-beta) modes.
inline Eigen::MatrixXd analytic_inverse(const Scene& scene, int q_max) {
    detail::require_separated(scene, "analytic_inverse");
    const ModeBasis basis = ideal_active_modes(scene, q_max);
    const IdealIntermediates iv = ideal_intermediates(scene, q_max);
    const double det = iv.a_plus * iv.a_minus - iv.b * iv.b;
    const Misalignment none = Misalignment(0.0, 0.0);
    const double two_nk = 2.0 * scene.n_kappa();

    const auto n = static_cast<Eigen::Index>(basis.size());
    Eigen::VectorXd parity(n), inv_diag(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const auto [mn, mm] = basis.mode(static_cast<std::size_t>(k));
        const double bk = beta(mn, mm, scene, none, SourceSign::plus);
        parity[k] = ((mn + mm) % 2 == 0) ? 1.0 : -1.0;
        inv_diag[k] = 1.0 / (two_nk * bk * bk);
    }
    Eigen::MatrixXd out(n, n);
    for (Eigen::Index k = 0; k < n; ++k)
        for (Eigen::Index l = 0; l < n; ++l) {
            double val = -(parity[k] * parity[l] * iv.a_plus - iv.b * (parity[k] + parity[l]) +
                           iv.a_minus) /
                         det;
            if (k == l) val += inv_diag[k];
            out(k, l) = val;
        }
    return out;
}

// M = (2Nk/w^2) [F - 2Nk (delta1 + delta2 + delta3)]
inline double sensitivity_ideal(const Scene& scene, int q_max) {
    detail::require_separated(scene, "sensitivity_ideal");
    const IdealIntermediates iv = ideal_intermediates(scene, q_max);
    const double nk = scene.n_kappa();
    const double w = scene.waist();
    return 2.0 * nk / (w * w) *
           (iv.f_term - 2.0 * nk * (iv.delta1 + iv.delta2 + iv.delta3));
}

// Equal-brightness Q -> infinity limit; coincides with the quantum Fisher
// information for two equally bright thermal sources.
inline double qfi_equal_brightness(const Scene& scene) {
    if (scene.gamma() != 0.0)
        throw DomainError("qfi_equal_brightness: only defined for equal brightness (gamma = 0)");
    const double nk = scene.n_kappa();
    const double w = scene.waist();
    const double x = scene.x();
    const double e = std::exp(-4.0 * x * x);
    return 2.0 * nk / (w * w) -
           8.0 * nk * nk * x * x * (nk + 1.0) * e /
               (w * w * ((nk + 1.0) * (nk + 1.0) - nk * nk * e));
}

// Q -> infinity sensitivity, independent of theta. At gamma = 0 this routes
// through the equal-brightness expression so the two agree bit for bit.
inline double sensitivity_asymptotic(const Scene& scene) {
    if (scene.gamma() == 0.0) return qfi_equal_brightness(scene);
    const double nk = scene.n_kappa();
    const double w = scene.waist();
    const double x = scene.x();
    const double g2 = scene.gamma() * scene.gamma();
    const double e = std::exp(-4.0 * x * x);
    const double num = 4.0 * (1.0 - g2) * nk * e * x * x * ((g2 + 1.0) * nk + 1.0);
    const double den = (1.0 - g2 * g2) * nk * nk * (1.0 - e) + 2.0 * nk + 1.0;
    return 2.0 * nk / (w * w) * (1.0 - num / den);
}

// (w/eta) m_ij = (i+j-x^2)/x
//   - (2Nk/(A+A- - B^2)) [((-1)^(i+j) A+ - B) S1 - ((-1)^(i+j) B - A-) S2],
// returned over ideal_active_modes(scene, q_max), unit 2-norm, sign fixed so
// the largest-magnitude coefficient is positive.
inline Eigen::VectorXd coefficients_ideal(const Scene& scene, int q_max) {
    detail::require_separated(scene, "coefficients_ideal");
    const ModeBasis basis = ideal_active_modes(scene, q_max);
    const IdealIntermediates iv = ideal_intermediates(scene, q_max);
    const double det = iv.a_plus * iv.a_minus - iv.b * iv.b;
    const double x = scene.x();
    const double two_nk = 2.0 * scene.n_kappa();

    const auto n = static_cast<Eigen::Index>(basis.size());
    Eigen::VectorXd m(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const auto [mi, mj] = basis.mode(static_cast<std::size_t>(k));
        const double sgn = ((mi + mj) % 2 == 0) ? 1.0 : -1.0;
        const double order = static_cast<double>(mi + mj);
        m[k] = (order - x * x) / x -
               two_nk / det * ((sgn * iv.a_plus - iv.b) * iv.s1 - (sgn * iv.b - iv.a_minus) * iv.s2);
    }
    const double norm = m.norm();
    if (norm == 0.0) return m;
    m /= norm;
    Eigen::Index imax = 0;
    m.cwiseAbs().maxCoeff(&imax);
    if (m[imax] < 0.0) m = -m;
    return m;
}

} // namespace superres
