#pragma once

// Monte Carlo ground truth for the demultiplexed photon-counting statistics.
//
// Per sample the thermal field is drawn in one of two equivalent ways:
//  - correlated_pm: draw the symmetric/antisymmetric amplitudes (beta+, beta-)
//    as a zero-mean complex Gaussian pair with <|b+|^2> = Nk(1+delta),
//    <|b-|^2> = Nk(1-delta), <b+ b-*> = -gamma sqrt(N+ N-), via a 2x2
//    Cholesky factor, then alpha_k = g_k+ b+ + g_k- b- with
//    g_k+- = (f+,k +- f-,k)/sqrt(2(1 +- delta)).
//  - independent_sources: draw two independent thermal amplitudes s1, s2 with
//    <|s1|^2> = (1-gamma)N, <|s2|^2> = (1+gamma)N and set
//    alpha_k = sqrt(kappa)(f+,k s1 + f-,k s2).
// The two paths must agree; the second fixes the sign of the cross
// correlation unambiguously (s+- = (s1 +- s2)/sqrt(2)).
//
// Counts are conditionally independent Poisson(|alpha_k|^2) per mode, plus
// independent Bose-Einstein dark counts. Standard errors come from batch
// means over a fixed serial batch order, so results are deterministic in
// (seed, samples) regardless of how callers parallelize around this.

#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "superres/demux_model.hpp"
#include "superres/errors.hpp"
#include "superres/hg_overlap.hpp"
#include "superres/noise.hpp"
#include "superres/rng.hpp"
#include "superres/scene.hpp"

namespace superres {

enum class McPath { correlated_pm, independent_sources };

struct McConfig {
    std::size_t samples = 1000000;
    std::uint64_t seed = 0;
    McPath path = McPath::correlated_pm;
    int batches = 100;
};

struct McResult {
    MomentData data; // empirical means and covariance; deriv not estimated (zero)
    Eigen::VectorXd mean_se;
    Eigen::MatrixXd cov_se;
    std::size_t samples = 0;
};

inline McResult sample_counts(const Scene& scene, const Misalignment& mis,
                              const CrosstalkMatrix& ct, const DarkCounts& dark,
                              const ModeBasis& basis, const McConfig& mc) {
    if (mc.samples < 1000)
        throw DomainError("sample_counts: need at least 1000 samples");
    if (mc.batches < 2) throw DomainError("sample_counts: need at least 2 batches");

    const ModeBasis full = ModeBasis::full(basis.q_max());
    const OverlapTable raw = overlap_table(scene, mis, full);
    const MixedOverlapTable mixed =
        ct.is_identity() ? MixedOverlapTable::from_real(raw) : apply_crosstalk(ct, raw);

    const auto n = static_cast<Eigen::Index>(basis.size());
    Eigen::VectorXcd fp(n), fm(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const auto [mn, mm] = basis.mode(static_cast<std::size_t>(k));
        const auto j = static_cast<Eigen::Index>(full.full_index(mn, mm));
        fp[k] = mixed.f_plus[j];
        fm[k] = mixed.f_minus[j];
    }

    Eigen::VectorXd dc = Eigen::VectorXd::Zero(n);
    if (dark.per_mode_mean.size() != 0) {
        if (dark.per_mode_mean.size() != n)
            throw DimensionMismatch("sample_counts: dark-count vector size mismatch");
        dc = dark.per_mode_mean;
    }

    const double g = scene.gamma();
    const double nk = scene.n_kappa();
    const double delta = overlap_delta(scene);

    // correlated_pm precomputation: Cholesky of the 2x2 amplitude covariance
    // and the overlap couplings g_k+-.
    const double np = nk * (1.0 + delta), nm = nk * (1.0 - delta);
    const double l11 = std::sqrt(np);
    const double l21 = -g * std::sqrt(nm);
    const double l22 = std::sqrt(nm * (1.0 - g * g));
    Eigen::VectorXcd gp(n), gm(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        gp[k] = (fp[k] + fm[k]) / std::sqrt(2.0 * (1.0 + delta));
        gm[k] = (delta < 1.0) ? (fp[k] - fm[k]) / std::sqrt(2.0 * (1.0 - delta))
                              : std::complex<double>(0.0, 0.0);
    }
    // independent_sources precomputation.
    const double s1_amp = std::sqrt((1.0 - g) * scene.n_mean());
    const double s2_amp = std::sqrt((1.0 + g) * scene.n_mean());
    const double sqrt_kappa = std::sqrt(scene.kappa());

    const int nbatch = mc.batches;
    std::vector<Eigen::VectorXd> batch_means;
    std::vector<Eigen::MatrixXd> batch_covs;
    batch_means.reserve(static_cast<std::size_t>(nbatch));
    batch_covs.reserve(static_cast<std::size_t>(nbatch));
    Eigen::VectorXd gsum = Eigen::VectorXd::Zero(n);
    Eigen::MatrixXd gsq = Eigen::MatrixXd::Zero(n, n);

    Eigen::VectorXd counts(n);
    std::complex<double> z1, z2;
    for (int b = 0; b < nbatch; ++b) {
        const std::size_t nb = mc.samples / static_cast<std::size_t>(nbatch) +
                               (static_cast<std::size_t>(b) <
                                        mc.samples % static_cast<std::size_t>(nbatch)
                                    ? 1u
                                    : 0u);
        Rng rng(derive_stream_seed(mc.seed, static_cast<std::uint64_t>(b)));
        Eigen::VectorXd bsum = Eigen::VectorXd::Zero(n);
        Eigen::MatrixXd bsq = Eigen::MatrixXd::Zero(n, n);
        for (std::size_t s = 0; s < nb; ++s) {
            const double inv_sqrt2 = 0.7071067811865475244;
            z1 = {rng.normal() * inv_sqrt2, rng.normal() * inv_sqrt2};
            z2 = {rng.normal() * inv_sqrt2, rng.normal() * inv_sqrt2};
            if (mc.path == McPath::correlated_pm) {
                const std::complex<double> bp = l11 * z1;
                const std::complex<double> bm = l21 * z1 + l22 * z2;
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double inten = std::norm(gp[k] * bp + gm[k] * bm);
                    counts[k] = static_cast<double>(rng.poisson(inten)) +
                                (dc[k] > 0.0 ? static_cast<double>(rng.bose_einstein(dc[k])) : 0.0);
                }
            } else {
                const std::complex<double> s1 = s1_amp * z1;
                const std::complex<double> s2 = s2_amp * z2;
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double inten = std::norm(sqrt_kappa * (fp[k] * s1 + fm[k] * s2));
                    counts[k] = static_cast<double>(rng.poisson(inten)) +
                                (dc[k] > 0.0 ? static_cast<double>(rng.bose_einstein(dc[k])) : 0.0);
                }
            }
            bsum += counts;
            bsq.noalias() += counts * counts.transpose();
        }
        gsum += bsum;
        gsq += bsq;
        const double dn = static_cast<double>(nb);
        Eigen::VectorXd bm = bsum / dn;
        Eigen::MatrixXd bc = (bsq / dn - bm * bm.transpose()) * (dn / (dn - 1.0));
        batch_means.push_back(std::move(bm));
        batch_covs.push_back(std::move(bc));
    }

    const double ds = static_cast<double>(mc.samples);
    Eigen::VectorXd means = gsum / ds;
    Eigen::MatrixXd cov = (gsq / ds - means * means.transpose()) * (ds / (ds - 1.0));
    McResult res{MomentData{basis, std::move(means), std::move(cov), Eigen::VectorXd::Zero(n)},
                 Eigen::VectorXd(), Eigen::MatrixXd(), mc.samples};

    // Batch-means standard errors: sd over batches / sqrt(B).
    const double db = static_cast<double>(nbatch);
    Eigen::VectorXd mmean = Eigen::VectorXd::Zero(n);
    for (const auto& v : batch_means) mmean += v;
    mmean /= db;
    Eigen::VectorXd mvar = Eigen::VectorXd::Zero(n);
    for (const auto& v : batch_means) mvar += (v - mmean).cwiseAbs2();
    res.mean_se = (mvar / (db - 1.0) / db).cwiseSqrt();

    Eigen::MatrixXd cmean = Eigen::MatrixXd::Zero(n, n);
    for (const auto& m : batch_covs) cmean += m;
    cmean /= db;
    Eigen::MatrixXd cvar = Eigen::MatrixXd::Zero(n, n);
    for (const auto& m : batch_covs) cvar += (m - cmean).cwiseAbs2();
    res.cov_se = (cvar / (db - 1.0) / db).cwiseSqrt();
    return res;
}

inline McResult sample_counts(const Scene& scene, const Misalignment& mis, const ModeBasis& basis,
                              const McConfig& mc) {
    return sample_counts(scene, mis,
                         CrosstalkMatrix::identity(static_cast<int>(basis.full_size())),
                         DarkCounts::none(basis.size()), basis, mc);
}

} // namespace superres
