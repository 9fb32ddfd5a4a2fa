#pragma once

// Overlap quantities for a Gaussian PSF measured in the Hermite-Gauss basis:
// the image-overlap delta = exp(-d^2/2w^2), the amplitudes
//
//   beta_nm(a) = (1/sqrt(n! m!)) exp(-|a|^2 / 2w^2) (a_x/w)^n (a_y/w)^m,
//
// and their analytic d-derivatives. The displacement argument used for the
// two sources is a(+-) = +-r0 - r_s (see scene.hpp for the conventions), so
// only a_x and a_y depend on d, through r0 = (d/2)(cos(theta), sin(theta)).
// All beta are real before crosstalk is applied.

#include <cmath>
#include <utility>

#include <Eigen/Dense>

#include "superres/scene.hpp"

namespace superres {

namespace detail {

inline double pow_int(double base, int n) {
    double r = 1.0;
    for (int i = 0; i < n; ++i) r *= base;
    return r;
}

inline double inv_sqrt_factorials(int n, int m) {
    long double f = 1.0L;
    for (int i = 2; i <= n; ++i) f *= i;
    for (int i = 2; i <= m; ++i) f *= i;
    return static_cast<double>(1.0L / sqrtl(f));
}

} // namespace detail

// beta_nm evaluated at an explicit displacement (a_x, a_y).
inline double beta_point(int n, int m, double ax, double ay, double w) {
    const double g = std::exp(-(ax * ax + ay * ay) / (2.0 * w * w));
    return detail::inv_sqrt_factorials(n, m) * g * detail::pow_int(ax / w, n) *
           detail::pow_int(ay / w, m);
}

// Gradient of beta_nm with respect to the displacement components.
inline std::pair<double, double> beta_point_grad(int n, int m, double ax, double ay, double w) {
    const double g = std::exp(-(ax * ax + ay * ay) / (2.0 * w * w));
    const double c = detail::inv_sqrt_factorials(n, m);
    const double px = detail::pow_int(ax / w, n);
    const double py = detail::pow_int(ay / w, m);
    // d/dax [ (ax/w)^n e^{-ax^2/2w^2} ] = [ n (ax/w)^{n-1} / w - (ax/w^2)(ax/w)^n ] e^{...}
    const double dx = (n > 0 ? n * detail::pow_int(ax / w, n - 1) / w : 0.0) - (ax / (w * w)) * px;
    const double dy = (m > 0 ? m * detail::pow_int(ay / w, m - 1) / w : 0.0) - (ay / (w * w)) * py;
    return {c * g * dx * py, c * g * px * dy};
}

// Overlap between the two source images, delta = exp(-d^2 / 2w^2).
inline double overlap_delta(const Scene& scene) {
    const double d = scene.d();
    const double w = scene.waist();
    return std::exp(-d * d / (2.0 * w * w));
}

enum class SourceSign { plus, minus };

inline std::pair<double, double> displacement(const Scene& scene, const Misalignment& mis,
                                              SourceSign sign) {
    const double s = (sign == SourceSign::plus) ? 1.0 : -1.0;
    const double ax = s * 0.5 * scene.d() * scene.cos_theta() - mis.d_s() * mis.cos_theta_s();
    const double ay = s * 0.5 * scene.d() * scene.sin_theta() - mis.d_s() * mis.sin_theta_s();
    return {ax, ay};
}

// beta_nm(+-r0 - r_s).
inline double beta(int n, int m, const Scene& scene, const Misalignment& mis, SourceSign sign) {
    const auto [ax, ay] = displacement(scene, mis, sign);
    return beta_point(n, m, ax, ay, scene.waist());
}

// d beta_nm(+-r0 - r_s) / dd; only r0 depends on d.
inline double beta_deriv(int n, int m, const Scene& scene, const Misalignment& mis,
                         SourceSign sign) {
    const auto [ax, ay] = displacement(scene, mis, sign);
    const auto [gx, gy] = beta_point_grad(n, m, ax, ay, scene.waist());
    const double s = (sign == SourceSign::plus) ? 1.0 : -1.0;
    return gx * s * 0.5 * scene.cos_theta() + gy * s * 0.5 * scene.sin_theta();
}

// Real overlap amplitudes f_{+-,k} = beta_nm(+-r0 - r_s) and their
// d-derivatives for every active mode, in basis order.
struct OverlapTable {
    ModeBasis basis;
    Eigen::VectorXd f_plus;
    Eigen::VectorXd f_minus;
    Eigen::VectorXd df_plus;
    Eigen::VectorXd df_minus;
};

inline OverlapTable overlap_table(const Scene& scene, const Misalignment& mis,
                                  const ModeBasis& basis) {
    const auto k = static_cast<Eigen::Index>(basis.size());
    OverlapTable t{basis, Eigen::VectorXd(k), Eigen::VectorXd(k), Eigen::VectorXd(k),
                   Eigen::VectorXd(k)};
    const double w = scene.waist();
    const auto [axp, ayp] = displacement(scene, mis, SourceSign::plus);
    const auto [axm, aym] = displacement(scene, mis, SourceSign::minus);
    for (Eigen::Index i = 0; i < k; ++i) {
        const auto [n, m] = basis.mode(static_cast<std::size_t>(i));
        t.f_plus[i] = beta_point(n, m, axp, ayp, w);
        t.f_minus[i] = beta_point(n, m, axm, aym, w);
        const auto [gxp, gyp] = beta_point_grad(n, m, axp, ayp, w);
        const auto [gxm, gym] = beta_point_grad(n, m, axm, aym, w);
        t.df_plus[i] = 0.5 * (gxp * scene.cos_theta() + gyp * scene.sin_theta());
        t.df_minus[i] = -0.5 * (gxm * scene.cos_theta() + gym * scene.sin_theta());
    }
    return t;
}

} // namespace superres
