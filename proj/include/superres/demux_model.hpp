#pragma once

// First and second photon-counting moments for Hermite-Gauss demultiplexing
// of two thermal point sources, including mode crosstalk and dark counts.
//
// The f overlaps are carried as complex numbers throughout: crosstalk makes
// them genuinely complex, and the noiseless real case is just a special case
// of the same assembly rather than a separate code path.

#include <complex>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "superres/errors.hpp"
#include "superres/hg_overlap.hpp"
#include "superres/noise.hpp"
#include "superres/scene.hpp"

namespace superres {

// means: N_k (photons); cov: Gamma_kl (photons^2); deriv: dN_k/dd.
struct MomentData {
    ModeBasis basis;
    Eigen::VectorXd means;
    Eigen::MatrixXd cov;
    Eigen::VectorXd deriv;
};

// The detected mode operators are c_k = sqrt(kappa)(f+,k a1 + f-,k a2) with
// a1, a2 two independent thermal sources of mean photon number N(1 -+ gamma).
// For this Gaussian, phase-invariant state the exact counting moments are
//   N_k   = Nk(|f+|^2 + |f-|^2) - gamma Nk(|f+|^2 - |f-|^2) + N_k^dc
//   D_k   = 2Nk[Re(f+* df+ + f-* df-) - gamma Re(f+* df+ - f-* df-)]
//   Gamma_kl = |<c_k^dag c_l>|^2 + d_kl N_k + d_kl N_k^dc(N_k^dc + 1),
//   <c_k^dag c_l> = Nk[(1 - gamma) f+,k* f+,l + (1 + gamma) f-,k* f-,l].
// Organized in powers of gamma (z_k = f-,k f+,k*):
//   Gamma^0_kl = (Nk)^2(|f-,k|^2|f-,l|^2 + |f+,k|^2|f+,l|^2
//                + 2 Re[z_k z_l*]) + d_kl Nk(|f+,k|^2 + |f-,k|^2)
//   Gamma^1_kl = 2(Nk)^2(|f-,k|^2|f-,l|^2 - |f+,k|^2|f+,l|^2)
//                - d_kl Nk(|f+,k|^2 - |f-,k|^2)
//   Gamma^2_kl = (Nk)^2(|f-,k|^2|f-,l|^2 + |f+,k|^2|f+,l|^2 - 2 Re[z_k z_l*])
// In the noiseless model f-,k = +-f+,k (mode parity), so the (Nk)^2 part of
// Gamma^1 cancels and Re[z_k z_l*] = Re[f-,k f-,l* f+,k f+,l*]: the blocks
// then coincide with the commonly quoted symmetric-case expressions. With
// misalignment or crosstalk and gamma != 0 that degeneracy is lifted and only
// the form above matches the sampled photon statistics (see the MC oracle).
inline MomentData demux_moments(const Scene& scene, const Misalignment& mis,
                                const CrosstalkMatrix& ct, const DarkCounts& dark,
                                const ModeBasis& basis) {
    const ModeBasis full = ModeBasis::full(basis.q_max());
    const OverlapTable raw = overlap_table(scene, mis, full);
    const MixedOverlapTable mixed =
        ct.is_identity() ? MixedOverlapTable::from_real(raw) : apply_crosstalk(ct, raw);

    const auto n = static_cast<Eigen::Index>(basis.size());
    Eigen::VectorXd dc = Eigen::VectorXd::Zero(n);
    if (dark.per_mode_mean.size() != 0) {
        if (dark.per_mode_mean.size() != n)
            throw DimensionMismatch("demux_moments: dark-count vector has " +
                                    std::to_string(dark.per_mode_mean.size()) +
                                    " entries for " + std::to_string(basis.size()) + " modes");
        dc = dark.per_mode_mean;
    }

    // Restrict the mixed full-basis overlaps to the measured modes.
    Eigen::VectorXd ap(n), am(n), rp(n), rm(n);
    Eigen::VectorXcd z(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const auto [mn, mm] = basis.mode(static_cast<std::size_t>(k));
        const auto j = static_cast<Eigen::Index>(full.full_index(mn, mm));
        const std::complex<double> fp = mixed.f_plus[j];
        const std::complex<double> fm = mixed.f_minus[j];
        ap[k] = std::norm(fp);
        am[k] = std::norm(fm);
        rp[k] = std::real(std::conj(fp) * mixed.df_plus[j]);
        rm[k] = std::real(std::conj(fm) * mixed.df_minus[j]);
        z[k] = fm * std::conj(fp);
    }

    const double nk = scene.n_kappa();
    const double g = scene.gamma();

    MomentData out{basis, Eigen::VectorXd(n), Eigen::MatrixXd(n, n), Eigen::VectorXd(n)};
    for (Eigen::Index k = 0; k < n; ++k) {
        out.means[k] = nk * (ap[k] + am[k]) - g * nk * (ap[k] - am[k]) + dc[k];
        out.deriv[k] = 2.0 * nk * ((rp[k] + rm[k]) - g * (rp[k] - rm[k]));
    }
    for (Eigen::Index k = 0; k < n; ++k)
        for (Eigen::Index l = k; l < n; ++l) {
            const double sum2 = am[k] * am[l] + ap[k] * ap[l];
            const double dif2 = am[k] * am[l] - ap[k] * ap[l];
            const double cross = 2.0 * std::real(z[k] * std::conj(z[l]));
            double val = nk * nk * ((sum2 + cross) + g * (2.0 * dif2) + g * g * (sum2 - cross));
            if (k == l) {
                val += nk * (ap[k] + am[k]);
                val -= g * nk * (ap[k] - am[k]);
                val += dc[k] * (dc[k] + 1.0);
            }
            out.cov(k, l) = val;
            out.cov(l, k) = val;
        }
    return out;
}

inline MomentData demux_moments(const Scene& scene, const Misalignment& mis,
                                const ModeBasis& basis) {
    return demux_moments(scene, mis, CrosstalkMatrix::identity(static_cast<int>(basis.full_size())),
                         DarkCounts::none(basis.size()), basis);
}

inline MomentData demux_moments(const Scene& scene, const ModeBasis& basis) {
    return demux_moments(scene, Misalignment(0.0, 0.0), basis);
}

// Drops modes that carry no signal at all: N_k, D_k and Gamma_kk all exactly
// zero. Those zeros are structural, produced by the exact trig snapping in
// Scene (theta a multiple of pi/2 with no misalignment, crosstalk or dark
// counts), so an exact comparison is the right test; nothing is thresholded.
inline MomentData reduce_degenerate(const MomentData& md, const Scene&) {
    const auto n = md.means.size();
    std::vector<std::size_t> keep;
    keep.reserve(static_cast<std::size_t>(n));
    for (Eigen::Index k = 0; k < n; ++k)
        if (!(md.means[k] == 0.0 && md.deriv[k] == 0.0 && md.cov(k, k) == 0.0))
            keep.push_back(static_cast<std::size_t>(k));
    bool any_signal = false;
    for (std::size_t k : keep)
        if (md.deriv[static_cast<Eigen::Index>(k)] != 0.0) any_signal = true;
    if (keep.empty() || !any_signal)
        throw DegenerateScene(
            "reduce_degenerate: no mode carries separation information; the estimation "
            "problem is not well posed (d = 0, or zero structural signal)");
    if (keep.size() == static_cast<std::size_t>(n)) return md;

    const auto m = static_cast<Eigen::Index>(keep.size());
    MomentData out{md.basis.subset(keep), Eigen::VectorXd(m), Eigen::MatrixXd(m, m),
                   Eigen::VectorXd(m)};
    for (Eigen::Index i = 0; i < m; ++i) {
        const auto ki = static_cast<Eigen::Index>(keep[static_cast<std::size_t>(i)]);
        out.means[i] = md.means[ki];
        out.deriv[i] = md.deriv[ki];
        for (Eigen::Index j = 0; j < m; ++j)
            out.cov(i, j) = md.cov(ki, static_cast<Eigen::Index>(keep[static_cast<std::size_t>(j)]));
    }
    return out;
}

} // namespace superres
