#pragma once

// Small-separation perturbative sensitivities for the different noise
// regimes, and the minimal resolvable distance: the smallest d satisfying
// d sqrt(mu M(d)) = 1, solved numerically on a log grid plus the printed
// closed-form scaling laws.
//
// Except for the low-brightness diagonal approximation (valid at any gamma),
// the expansions below hold for equally bright sources only and reject
// gamma != 0.

#include <cmath>
#include <functional>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "superres/demux_model.hpp"
#include "superres/direct_imaging.hpp"
#include "superres/errors.hpp"
#include "superres/moments_engine.hpp"
#include "superres/noise.hpp"
#include "superres/scene.hpp"

namespace superres {

enum class NoiseRegime {
    low_brightness_diag, // Nk << 1: covariance diagonal dominates
    dc_dominated,        // dark counts mask crosstalk (sigma of order eps^0)
    ct_dominated,        // crosstalk and dark counts comparable (sigma ~ eps^2)
    uniform_dc,          // uniform-crosstalk simplification, dark dominated
    uniform_ct,          // uniform-crosstalk simplification, crosstalk dominated
    misalignment_only,   // no crosstalk, no dark counts
};

inline const char* regime_tag(NoiseRegime r) {
    switch (r) {
        case NoiseRegime::low_brightness_diag: return "low-brightness-diag";
        case NoiseRegime::dc_dominated: return "dc-dominated";
        case NoiseRegime::ct_dominated: return "ct-dominated";
        case NoiseRegime::uniform_dc: return "uniform-dc";
        case NoiseRegime::uniform_ct: return "uniform-ct";
        case NoiseRegime::misalignment_only: return "misalignment-only";
    }
    return "unknown";
}

inline NoiseRegime parse_noise_regime(std::string_view tag) {
    if (tag == "low-brightness-diag") return NoiseRegime::low_brightness_diag;
    if (tag == "dc-dominated") return NoiseRegime::dc_dominated;
    if (tag == "ct-dominated") return NoiseRegime::ct_dominated;
    if (tag == "uniform-dc") return NoiseRegime::uniform_dc;
    if (tag == "uniform-ct") return NoiseRegime::uniform_ct;
    if (tag == "misalignment-only") return NoiseRegime::misalignment_only;
    throw DomainError("unknown noise regime tag: " + std::string(tag));
}

// Extra inputs consumed by the individual regimes; only the fields a regime
// needs have to be set.
struct ApproxParams {
    double sigma = 0.0;                  // uniform dark level N^dc/(2 N kappa)
    double r2 = 0.0;                     // uniform-crosstalk off-diagonal power |r|^2
    const CrosstalkMatrix* ct = nullptr; // realized matrix (dc/ct-dominated)
    const ModeBasis* basis = nullptr;    // low-brightness-diag
    const DarkCounts* dark = nullptr;    // low-brightness-diag (optional)
};

// Nk << 1 diagonal approximation, M ~ sum_k D_k^2 / N'_k with N'_k the mean
// including dark counts. Valid at any gamma; modes with exactly zero mean
// carry no counts and are skipped.
inline double sensitivity_low_brightness(const MomentData& md) {
    double acc = 0.0;
    for (Eigen::Index k = 0; k < md.means.size(); ++k)
        if (md.means[k] != 0.0) acc += md.deriv[k] * md.deriv[k] / md.means[k];
    return acc;
}

namespace detail {

inline void require_equal_brightness(const Scene& scene, const char* regime) {
    if (scene.gamma() != 0.0)
        throw DomainError(std::string(regime) +
                          ": small-separation expansion requires equal brightness (gamma = 0)");
}

// cos(4 theta) from the snapped cos/sin so axis-aligned angles stay exact.
inline double cos_4theta(const Scene& scene) {
    const double c = scene.cos_theta(), s = scene.sin_theta();
    const double cos2 = (c - s) * (c + s);
    return 2.0 * cos2 * cos2 - 1.0;
}

inline Eigen::Index ct_index(const CrosstalkMatrix& ct, int n, int m) {
    const int q1 = static_cast<int>(std::lround(std::sqrt(static_cast<double>(ct.dim))));
    if (q1 * q1 != ct.dim || q1 < 2)
        throw DimensionMismatch("crosstalk matrix dimension is not a full (Q+1)^2 basis with Q >= 1");
    return static_cast<Eigen::Index>(n) * q1 + m;
}

} // namespace detail

inline double approx_sensitivity(const Scene& scene, const Misalignment& mis, NoiseRegime regime,
                                 const ApproxParams& p = {}) {
    const double nk = scene.n_kappa();
    const double w = scene.waist();
    const double x = scene.x();
    const double pref = 2.0 * nk / (w * w) * x * x;
    const double c = scene.cos_theta(), s = scene.sin_theta();

    switch (regime) {
        case NoiseRegime::low_brightness_diag: {
            if (!p.basis)
                throw DomainError("low-brightness-diag needs a mode basis");
            const auto full = static_cast<int>(p.basis->full_size());
            const MomentData md =
                demux_moments(scene, mis, p.ct ? *p.ct : CrosstalkMatrix::identity(full),
                              p.dark ? *p.dark : DarkCounts::none(p.basis->size()), *p.basis);
            return sensitivity_low_brightness(md);
        }
        case NoiseRegime::dc_dominated: {
            detail::require_equal_brightness(scene, "dc-dominated");
            if (!p.ct) throw DomainError("dc-dominated needs a realized crosstalk matrix");
            if (!(p.sigma > 0.0)) throw DomainError("dc-dominated needs sigma > 0");
            const auto& e = p.ct->entries;
            const double c00 = std::norm(e(0, 0));
            const double c01 = std::norm(e(detail::ct_index(*p.ct, 0, 1), detail::ct_index(*p.ct, 0, 1)));
            const double c10 = std::norm(e(detail::ct_index(*p.ct, 1, 0), detail::ct_index(*p.ct, 1, 0)));
            const double t1 = c00 * c00 / (2.0 * nk * (c00 * c00 + p.sigma * p.sigma) + c00 + p.sigma);
            const double t2 = (s * s * s * s * c01 * c01 + c * c * c * c * c10 * c10) /
                              (2.0 * nk * p.sigma * p.sigma + p.sigma);
            return pref * (t1 + t2);
        }
        case NoiseRegime::ct_dominated: {
            detail::require_equal_brightness(scene, "ct-dominated");
            if (!p.ct) throw DomainError("ct-dominated needs a realized crosstalk matrix");
            const auto& e = p.ct->entries;
            const double c01d = std::norm(e(detail::ct_index(*p.ct, 0, 1), detail::ct_index(*p.ct, 0, 1)));
            const double c10d = std::norm(e(detail::ct_index(*p.ct, 1, 0), detail::ct_index(*p.ct, 1, 0)));
            const double c01_00 = std::norm(e(detail::ct_index(*p.ct, 0, 1), 0));
            const double c10_00 = std::norm(e(detail::ct_index(*p.ct, 1, 0), 0));
            if (!(c01_00 + p.sigma > 0.0) || !(c10_00 + p.sigma > 0.0))
                throw DomainError("ct-dominated needs nonzero scattering into u00 or sigma > 0");
            return pref * (s * s * s * s * c01d * c01d / (c01_00 + p.sigma) +
                           c * c * c * c * c10d * c10d / (c10_00 + p.sigma));
        }
        case NoiseRegime::uniform_dc: {
            detail::require_equal_brightness(scene, "uniform-dc");
            if (!(p.sigma > 0.0)) throw DomainError("uniform-dc needs sigma > 0");
            const double c4 = detail::cos_4theta(scene);
            return pref * ((c4 + 3.0) / (8.0 * nk * p.sigma * p.sigma + 4.0 * p.sigma) +
                           1.0 / (2.0 * nk * (p.sigma * p.sigma + 1.0) + p.sigma + 1.0));
        }
        case NoiseRegime::uniform_ct: {
            detail::require_equal_brightness(scene, "uniform-ct");
            if (!(p.r2 + p.sigma > 0.0)) throw DomainError("uniform-ct needs |r|^2 + sigma > 0");
            return pref * (detail::cos_4theta(scene) + 3.0) / (4.0 * (p.r2 + p.sigma));
        }
        case NoiseRegime::misalignment_only: {
            detail::require_equal_brightness(scene, "misalignment-only");
            const double xs = mis.x_s(scene);
            const double cs = mis.cos_theta_s(), ss = mis.sin_theta_s();
            const double den1 = x * x * s * s + 4.0 * xs * xs * ss * ss;
            const double den2 = x * x * c * c + 4.0 * xs * xs * cs * cs;
            const double t1 = (den1 > 0.0) ? s * s * s * s / den1 : 0.0;
            const double t2 = (den2 > 0.0) ? c * c * c * c / den2 : 0.0;
            return pref * (t1 + t2);
        }
    }
    throw DomainError("approx_sensitivity: unhandled regime");
}

// ---- minimal resolvable distance ----

struct ScanGrid {
    double x_lo = 1e-6;
    double x_hi = 5.0;
    int points = 400;
};

struct DminQuery {
    long mu = 1; // measurement repetitions
    ScanGrid scan{};
};

inline double n_detected(const Scene& scene, long mu) { return mu * 2.0 * scene.n_kappa(); }

// Smallest d with g(d) = d sqrt(mu M(d)) >= 1: bracket on the log grid
// (first crossing; M can dip and re-cross), then bisect to 1e-6 relative.
inline double dmin_solve_fn(const std::function<double(double)>& m_of_d, const DminQuery& q,
                            double waist) {
    if (q.mu < 1) throw DomainError("dmin: mu must be >= 1");
    if (!(q.scan.x_lo > 0.0) || !(q.scan.x_hi > q.scan.x_lo) || q.scan.points < 2)
        throw DomainError("dmin: invalid scan grid");

    auto g = [&](double d) {
        const double m = m_of_d(d);
        return (m > 0.0) ? d * std::sqrt(static_cast<double>(q.mu) * m) : 0.0;
    };
    auto bisect = [&](double lo, double hi) {
        for (int it = 0; it < 200 && (hi - lo) > 1e-6 * hi; ++it) {
            const double mid = 0.5 * (lo + hi);
            (g(mid) >= 1.0 ? hi : lo) = mid;
        }
        return 0.5 * (lo + hi);
    };

    const double lratio = std::log(q.scan.x_hi / q.scan.x_lo);
    double prev_d = 2.0 * waist * q.scan.x_lo;
    double prev_g = g(prev_d);
    if (prev_g >= 1.0) return bisect(prev_d * 1e-12, prev_d);
    double max_g = prev_g, at_d = prev_d;
    for (int i = 1; i < q.scan.points; ++i) {
        const double xi = q.scan.x_lo * std::exp(lratio * i / (q.scan.points - 1.0));
        const double di = 2.0 * waist * xi;
        const double gi = g(di);
        if (gi > max_g) {
            max_g = gi;
            at_d = di;
        }
        if (prev_g < 1.0 && gi >= 1.0) return bisect(prev_d, di);
        prev_d = di;
        prev_g = gi;
    }
    throw NoCrossing("dmin: d sqrt(mu M(d)) stays below 1 over the whole scan", max_g, at_d);
}

// Demultiplexing path: moments -> degenerate reduction -> engine, at each d.
inline double dmin_solve(const Scene& scene, const Misalignment& mis, const CrosstalkMatrix& ct,
                         const DarkCounts& dark, const ModeBasis& basis, const DminQuery& q) {
    return dmin_solve_fn(
        [&](double d) {
            MomentData md = demux_moments(scene.with_d(d), mis, ct, dark, basis);
            md = reduce_degenerate(md, scene);
            return sensitivity(md).m_value;
        },
        q, scene.waist());
}

inline double dmin_solve_direct_imaging(const Scene& scene, const PixelGrid& grid,
                                        const DminQuery& q) {
    return dmin_solve_fn(
        [&](double d) { return di_sensitivity(scene.with_d(d), grid).m_value; }, q,
        scene.waist());
}

// ---- printed closed-form scaling laws (all for gamma = 0) ----

enum class DminRegime {
    ideal,
    misalignment,
    crosstalk,
    dark_counts,
    dark_counts_large_n,
    direct_imaging,
};

// Uniform noise levels consumed by the closed forms.
struct DminNoise {
    double r2 = 0.0;  // uniform crosstalk off-diagonal power |r|^2
    double ndc = 0.0; // dark counts per mode N^dc
};

// The large-brightness dark-count law predicts an unphysical better-than-
// ideal scaling below this dark-count level.
inline double dmin_dark_counts_floor(long mu) {
    return (std::sqrt(4.0 + 2.0 / static_cast<double>(mu)) - 2.0) / 4.0;
}

inline double dmin_closed_form(DminRegime regime, const Scene& scene, const Misalignment& mis,
                               const DminNoise& noise, long mu, std::string* warning = nullptr) {
    if (mu < 1) throw DomainError("dmin_closed_form: mu must be >= 1");
    detail::require_equal_brightness(scene, "dmin_closed_form");
    const double w = scene.waist();
    const double nk = scene.n_kappa();
    const double ndet = n_detected(scene, mu);
    const double c4 = detail::cos_4theta(scene);

    switch (regime) {
        case DminRegime::ideal:
            return w / std::sqrt(ndet);
        case DminRegime::misalignment: {
            const double c = scene.cos_theta(), s = scene.sin_theta();
            const double cs = mis.cos_theta_s(), ss = mis.sin_theta_s();
            if (cs == 0.0 || ss == 0.0)
                throw DomainError("dmin misalignment law needs theta_s away from the axes");
            const double bracket =
                c * c * c * c / (cs * cs) + s * s * s * s / (ss * ss);
            if (!(bracket > 0.0) || !std::isfinite(bracket))
                throw DomainError("dmin misalignment law: degenerate angle combination");
            return std::sqrt(2.0 * mis.d_s() * w) /
                   (std::pow(ndet, 0.25) * std::pow(bracket, 0.25));
        }
        case DminRegime::crosstalk: {
            if (!(noise.r2 > 0.0)) throw DomainError("dmin crosstalk law needs |r|^2 > 0");
            return w / std::pow(ndet, 0.25) * std::pow(noise.r2 / (3.0 + c4), 0.25);
        }
        case DminRegime::dark_counts: {
            if (!(noise.ndc > 0.0)) throw DomainError("dmin dark-count law needs N^dc > 0");
            const double nn1 = noise.ndc * (noise.ndc + 1.0);
            const double bracket = (c4 + 3.0) / (4.0 * nn1) +
                                   1.0 / (nn1 + 2.0 * nk * (2.0 * nk + 1.0));
            return std::sqrt(2.0) * w / std::pow(nk * nk * mu, 0.25) * std::pow(bracket, -0.25);
        }
        case DminRegime::dark_counts_large_n: {
            if (!(noise.ndc > 0.0)) throw DomainError("dmin dark-count law needs N^dc > 0");
            const double floor = dmin_dark_counts_floor(mu);
            if (noise.ndc < floor)
                throw DomainError(
                    "dmin large-brightness dark-count law predicts unphysical scaling for "
                    "N^dc < " +
                    std::to_string(floor));
            if (warning && noise.ndc < 1.0)
                *warning = "large-brightness dark-count law tends to underestimate d_min at "
                           "low dark-count levels";
            const double bracket = (c4 + 3.0) / (noise.ndc * (noise.ndc + 1.0));
            return std::sqrt(2.0) * w / (std::sqrt(nk) * std::pow(static_cast<double>(mu), 0.25)) *
                   std::pow(bracket, -0.25);
        }
        case DminRegime::direct_imaging:
            return w * std::pow(0.5, 0.25) / std::pow(ndet, 0.25);
    }
    throw DomainError("dmin_closed_form: unhandled regime");
}

} // namespace superres
