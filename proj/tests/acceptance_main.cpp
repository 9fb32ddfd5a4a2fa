// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on failure.
//
// Each criterion pins a library-level guarantee at a fixed tolerance on a
// fixed grid. Grids are frozen here (not configurable) so a green run means
// the same thing on every machine. Sub-checks print measured extremes so a
// failure localizes without a debugger.

#include "superres/superres.hpp"

#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>
#include <sstream>
#include <string>
#include <vector>

using namespace superres;

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Criterion {
    int id;
    const char* name;
    bool pass = true;
    std::vector<std::string> notes;

    Criterion(int id_, const char* name_) : id(id_), name(name_) {}

    void require(bool ok, const std::string& note) {
        if (!ok) pass = false;
        notes.push_back(std::string(ok ? "ok   " : "FAIL ") + note);
    }
    void info(const std::string& note) { notes.push_back("     " + note); }
};

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

double rel_diff(double a, double b) {
    const double scale = std::max(std::abs(a), std::abs(b));
    return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

// log-log least-squares fit d = C * n^s; returns {s, C}
std::pair<double, double> loglog_fit(const std::vector<double>& n, const std::vector<double>& d) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double m = static_cast<double>(n.size());
    for (std::size_t i = 0; i < n.size(); ++i) {
        const double lx = std::log(n[i]), ly = std::log(d[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    return {slope, std::exp((sy - slope * sx) / m)};
}

// Chain-inequality accumulator (criterion 10): every equal-brightness M from
// the other criteria is checked against the infinite-Q asymptote.
struct ChainAudit {
    long checked = 0;
    long violations = 0;
    double worst_excess = -1e300; // max over checks of M - bound
    std::string worst_at;

    void observe(const Scene& sc, double m_value, const std::string& where) {
        if (sc.gamma() != 0.0 || !(sc.d() > 0.0)) return;
        const double bound = qfi_equal_brightness(sc);
        const double excess = m_value - (bound + 1e-9);
        ++checked;
        if (excess > worst_excess) {
            worst_excess = excess;
            worst_at = where;
        }
        if (excess > 0.0) ++violations;
    }
};

ChainAudit g_chain;

Scene scene_at(double x, double theta, double n_kappa, double gamma) {
    return make_scene(2.0 * x, theta, n_kappa, gamma, 1.0, 1.0);
}

double engine_m(const Scene& sc, const Misalignment& mis, const CrosstalkMatrix& ct,
                const DarkCounts& dark, const ModeBasis& basis, const std::string& where) {
    MomentData md = demux_moments(sc, mis, ct, dark, basis);
    const double m = sensitivity(md).m_value;
    g_chain.observe(sc, m, where);
    return m;
}

// ---------------------------------------------------------------- criterion 1
Criterion criterion_qfi_saturation() {
    Criterion c{1, "asymptote-equals-qfi"};

    long pts = 0, exact = 0;
    for (double nk : {0.5, 1.5, 10.0})
        for (int i = 0; i <= 60; ++i) {
            const double x = 0.05 + (1.5 - 0.05) * i / 60.0;
            const Scene sc = scene_at(x, kPi / 4, nk, 0.0);
            ++pts;
            if (sensitivity_asymptotic(sc) == qfi_equal_brightness(sc)) ++exact;
        }
    c.require(exact == pts,
              "gamma=0 asymptote bitwise-equal to the equal-brightness bound at " +
                  std::to_string(exact) + "/" + std::to_string(pts) + " grid points");

    double worst_gap = 0.0, worst_x = 0.0;
    for (int i = 0; i <= 60; ++i) {
        const double x = 0.05 + (1.5 - 0.05) * i / 60.0;
        const Scene sc = scene_at(x, kPi / 4, 1.5, 0.0);
        const double qfi = qfi_equal_brightness(sc);
        const double m9 = sensitivity_ideal(sc, 9);
        g_chain.observe(sc, m9, "c1 Q=9");
        const double gap = (qfi - m9) / qfi;
        if (gap > worst_gap) {
            worst_gap = gap;
            worst_x = x;
        }
    }
    c.require(worst_gap < 0.01, "Q=9 worst relative gap to the asymptote " + num(worst_gap) +
                                    " at x=" + num(worst_x) + " (tol 1e-2)");
    return c;
}

// ---------------------------------------------------------------- criterion 2
Criterion criterion_closed_vs_engine() {
    Criterion c{2, "closed-form-vs-engine"};

    double worst_m = 0.0, worst_coeff = 0.0;
    long pts = 0;
    for (int q : {1, 2, 4, 9})
        for (double x : {0.1, 0.5, 1.0, 1.5, 2.0})
            for (double g : {0.0, 0.25, 0.5})
                for (double th : {kPi / 6, kPi / 4}) {
                    const Scene sc = scene_at(x, th, 1.5, g);
                    const ModeBasis basis = ideal_active_modes(sc, q);
                    const MomentData md = demux_moments(sc, basis);
                    const SensitivityResult eng = sensitivity(md);
                    g_chain.observe(sc, eng.m_value, "c2 engine");

                    worst_m = std::max(worst_m, rel_diff(eng.m_value, sensitivity_ideal(sc, q)));
                    const Eigen::VectorXd closed = coefficients_ideal(sc, q);
                    const double cdiff = (eng.coeffs - closed).cwiseAbs().maxCoeff() /
                                         closed.cwiseAbs().maxCoeff();
                    worst_coeff = std::max(worst_coeff, cdiff);
                    ++pts;
                }
    c.require(worst_m < 1e-9,
              "sensitivity closed vs engine, worst rel " + num(worst_m) + " over " +
                  std::to_string(pts) + " points (tol 1e-9)");
    c.require(worst_coeff < 1e-9,
              "coefficients closed vs engine, worst rel " + num(worst_coeff) + " (tol 1e-9)");
    return c;
}

// ---------------------------------------------------------------- criterion 3
Criterion criterion_structured_inverses() {
    Criterion c{3, "structured-inverse-correctness"};

    double worst_inv = 0.0;
    for (int q : {1, 2, 4, 9})
        for (double x : {0.1, 0.8, 1.6, 2.0})
            for (double g : {0.0, 0.25, 0.5})
                for (double th : {kPi / 6, kPi / 4}) {
                    const Scene sc = scene_at(x, th, 1.5, g);
                    const MomentData md = demux_moments(sc, ideal_active_modes(sc, q));
                    const Eigen::MatrixXd ginv = analytic_inverse(sc, q);
                    const Eigen::Index n = md.cov.rows();
                    const double err = (md.cov * ginv - Eigen::MatrixXd::Identity(n, n))
                                           .cwiseAbs()
                                           .maxCoeff();
                    worst_inv = std::max(worst_inv, err);
                }
    c.require(worst_inv < 1e-8,
              "closed-form inverse: worst ||Gamma Gamma^-1 - 1||_max " + num(worst_inv) +
                  " (tol 1e-8)");

    double worst_di = 0.0;
    const PixelGrid grid(8, 3.0);
    for (double x : {0.1, 0.5, 1.0})
        for (double g : {0.0, 0.25, 0.5}) {
            const Scene sc = scene_at(x, kPi / 6, 1.5, g);
            const DirectImagingMoments mom = pixel_overlaps(sc, grid);
            const int np = grid.n_p;
            const Eigen::Index n = static_cast<Eigen::Index>(grid.pixel_count());
            Eigen::VectorXd phi(n), psi(n), xi(n), deriv(n);
            for (int i = 0; i < np; ++i)
                for (int j = 0; j < np; ++j) {
                    const Eigen::Index k = static_cast<Eigen::Index>(i) * np + j;
                    phi[k] = mom.phi(i, j);
                    psi[k] = mom.psi(i, j);
                    xi[k] = mom.xi(i, j);
                    deriv[k] = mom.deriv(i, j);
                }
            const Eigen::MatrixXd dense =
                oracles::dense_di_covariance(phi, psi, xi, sc.n_kappa(), sc.gamma());
            const double m_dense = oracles::dense_sensitivity(dense, deriv);
            const double m_lowrank = di_sensitivity(sc, grid).m_value;
            g_chain.observe(sc, m_lowrank, "c3 direct imaging");
            worst_di = std::max(worst_di, rel_diff(m_dense, m_lowrank));
        }
    c.require(worst_di < 1e-8, "direct imaging low-rank vs dense solve at N_p=8, worst rel " +
                                   num(worst_di) + " (tol 1e-8)");
    return c;
}

// ---------------------------------------------------------------- criterion 4
struct McCase {
    std::string label;
    double worst_mean_z = 0.0;
    double worst_cov_z = 0.0;
    std::string error;
};

McCase run_mc_case(double x, double gamma, int noise, McPath path, std::uint64_t seed) {
    McCase out;
    std::ostringstream lbl;
    lbl << "x=" << x << " gamma=" << gamma << " noise=" << noise << " path="
        << (path == McPath::correlated_pm ? "pm" : "s12");
    out.label = lbl.str();
    try {
        const Scene sc = scene_at(x, kPi / 4, 1.5, gamma);
        const ModeBasis basis = ModeBasis::full(1);
        const int dim = static_cast<int>(basis.full_size());
        Misalignment mis;
        CrosstalkMatrix ct = CrosstalkMatrix::identity(dim);
        DarkCounts dark = DarkCounts::none(basis.size());
        if (noise == 1) mis = Misalignment(0.05, kPi / 4);
        if (noise == 2) ct = sample_crosstalk(dim, 0.0017, 5);
        if (noise == 3) dark = DarkCounts::uniform_mean(0.02, basis.size());

        const MomentData truth = demux_moments(sc, mis, ct, dark, basis);
        McConfig mc;
        mc.samples = 1000000;
        mc.seed = seed;
        mc.path = path;
        const McResult emp = sample_counts(sc, mis, ct, dark, basis, mc);

        for (Eigen::Index k = 0; k < truth.means.size(); ++k)
            out.worst_mean_z = std::max(
                out.worst_mean_z, std::abs(emp.data.means[k] - truth.means[k]) / emp.mean_se[k]);
        for (Eigen::Index i = 0; i < truth.cov.rows(); ++i)
            for (Eigen::Index j = i; j < truth.cov.cols(); ++j)
                out.worst_cov_z = std::max(
                    out.worst_cov_z, std::abs(emp.data.cov(i, j) - truth.cov(i, j)) / emp.cov_se(i, j));
    } catch (const std::exception& e) {
        out.error = e.what();
    }
    return out;
}

Criterion criterion_mc_oracle() {
    Criterion c{4, "monte-carlo-agreement"};

    std::vector<std::future<McCase>> futs;
    std::uint64_t seed = 40000;
    for (double x : {0.2, 0.6, 1.2})
        for (double gamma : {0.0, 0.5})
            for (int noise : {0, 1, 2, 3})
                for (McPath path : {McPath::correlated_pm, McPath::independent_sources}) {
                    ++seed;
                    futs.push_back(std::async(std::launch::async, run_mc_case, x, gamma, noise,
                                              path, seed));
                }

    double worst_mean = 0.0, worst_cov = 0.0;
    std::string worst_mean_at, worst_cov_at;
    long failures = 0;
    for (auto& f : futs) {
        const McCase r = f.get();
        if (!r.error.empty()) {
            ++failures;
            c.require(false, "sampler raised: " + r.error + " [" + r.label + "]");
            continue;
        }
        if (r.worst_mean_z > worst_mean) {
            worst_mean = r.worst_mean_z;
            worst_mean_at = r.label;
        }
        if (r.worst_cov_z > worst_cov) {
            worst_cov = r.worst_cov_z;
            worst_cov_at = r.label;
        }
    }
    c.require(worst_mean < 5.0, "means within 5 SE across " + std::to_string(futs.size()) +
                                    " runs of 1e6 samples, worst z " + num(worst_mean) + " [" +
                                    worst_mean_at + "]");
    c.require(worst_cov < 5.0,
              "covariances within 5 SE, worst z " + num(worst_cov) + " [" + worst_cov_at + "]");
    return c;
}

// ---------------------------------------------------------------- criterion 5
Criterion criterion_direct_imaging_family() {
    Criterion c{5, "direct-imaging-family"};

    const PixelGrid g50(50, 3.0), g100(100, 3.0);
    double worst_small = 0.0, worst_floor = 0.0, worst_refine = 0.0;
    for (double nk : {0.1, 1.5, 10.0})
        for (double gamma : {0.0, 0.25, 0.5}) {
            // small-separation closed form at x = 0.01
            {
                const Scene sc = scene_at(0.01, kPi / 4, nk, gamma);
                const double exact = di_sensitivity(sc, g50).m_value;
                g_chain.observe(sc, exact, "c5 small-x");
                worst_small = std::max(worst_small, rel_diff(exact, di_small_separation(sc)));
            }
            // exact zero-separation limit: M(0) w^2 / (2 N kappa) -> gamma^2
            {
                const Scene sc = make_scene(0.0, kPi / 4, nk, gamma, 1.0, 1.0);
                const double m0 = di_sensitivity(sc, g50).m_value;
                const double scaled = m0 / (2.0 * nk);
                if (gamma == 0.0)
                    worst_floor = std::max(worst_floor, std::abs(scaled));
                else
                    worst_floor = std::max(worst_floor, rel_diff(scaled, gamma * gamma));
            }
            // pixel refinement 50 -> 100 at the separations the sensitivity
            // curves are plotted over (peak and tail); below x ~ 0.5 the
            // x^2-suppressed sensitivity still shifts by up to 0.7% because
            // the N_p=50 pixel pitch (0.12 w) is comparable to d itself
            for (double x : {0.5, 1.0, 2.0}) {
                const Scene sc = scene_at(x, kPi / 4, nk, gamma);
                const double m50 = di_sensitivity(sc, g50).m_value;
                const double m100 = di_sensitivity(sc, g100).m_value;
                g_chain.observe(sc, m100, "c5 refine");
                worst_refine = std::max(worst_refine, std::abs(m100 - m50) / m100);
            }
        }
    c.require(worst_small < 0.02, "exact vs small-separation form at x=0.01, worst rel " +
                                      num(worst_small) + " (tol 2e-2)");
    c.require(worst_floor < 0.02, "M(d=0) w^2/(2 N kappa) vs gamma^2, worst dev " +
                                      num(worst_floor) + " (tol 2e-2)");
    c.require(worst_refine < 0.005, "N_p 50->100 sensitivity change over x in {0.5,1,2}, "
                                    "worst rel " +
                                        num(worst_refine) + " (tol 5e-3)");
    return c;
}

// ---------------------------------------------------------------- criterion 6
Criterion criterion_noisy_panels() {
    Criterion c{6, "noisy-demux-panels"};

    const double nk = 1.5;
    const Misalignment mis(0.02, kPi / 4); // x_s = 0.01
    const Misalignment no_mis;
    const double sigma = 0.001, r2 = 0.0017;
    const std::vector<double> xs = {0.001, 0.003, 0.01, 0.02, 0.03};

    // (a) every noisy sensitivity collapses as d -> 0
    for (int q : {1, 2}) {
        const ModeBasis basis = ModeBasis::full(q);
        const int dim = static_cast<int>(basis.full_size());
        const CrosstalkMatrix id = CrosstalkMatrix::identity(dim);
        const DarkCounts none = DarkCounts::none(basis.size());
        const Scene ref = scene_at(0.3, kPi / 4, nk, 0.0);
        const double bound = 1e-2 * sensitivity_ideal(ref, q);
        const Scene sc = scene_at(1e-3, kPi / 4, nk, 0.0);

        const double m_mis = engine_m(sc, mis, id, none, basis, "c6 floor mis");
        const double m_dc = engine_m(sc, no_mis, id,
                                     DarkCounts::uniform_sigma(sigma, sc, basis.size()), basis,
                                     "c6 floor dc");
        double m_ct_sum = 0.0, m_ct_max = 0.0;
        for (std::uint64_t seed = 1000; seed < 1100; ++seed) {
            const double m = engine_m(sc, no_mis, sample_crosstalk(dim, r2, seed), none, basis,
                                      "c6 floor ct");
            m_ct_sum += m;
            m_ct_max = std::max(m_ct_max, m);
        }
        const double m_ct = m_ct_sum / 100.0;
        c.require(m_mis < bound && m_dc < bound && m_ct < bound,
                  "Q=" + std::to_string(q) + " noisy M(x=1e-3) {mis " + num(m_mis) + ", dc " +
                      num(m_dc) + ", ct 100-seed mean " + num(m_ct) +
                      "} all < 1e-2 M_ideal(x=0.3) = " + num(bound));
        c.info("  Q=" + std::to_string(q) + " ct floor max over seeds " + num(m_ct_max) +
               " (heavy right tail; the published bands plot ensemble statistics)");
    }

    // (b) small-x closed forms vs exact, x <= 0.03
    const ModeBasis basis = ModeBasis::full(2);
    const int dim = static_cast<int>(basis.full_size());
    const CrosstalkMatrix id = CrosstalkMatrix::identity(dim);
    const DarkCounts none = DarkCounts::none(basis.size());

    double worst_mis = 0.0;
    std::string dc_row, ct_row;
    double worst_dc = 0.0, worst_ct = 0.0;
    for (double x : xs) {
        const Scene sc = scene_at(x, kPi / 4, nk, 0.0);

        const double mis_exact = engine_m(sc, mis, id, none, basis, "c6 mis");
        const double mis_form = approx_sensitivity(sc, mis, NoiseRegime::misalignment_only);
        worst_mis = std::max(worst_mis, rel_diff(mis_exact, mis_form));

        const DarkCounts dark = DarkCounts::uniform_sigma(sigma, sc, basis.size());
        const double dc_exact = engine_m(sc, no_mis, id, dark, basis, "c6 dc");
        ApproxParams pd;
        pd.sigma = sigma;
        const double dc_form = approx_sensitivity(sc, no_mis, NoiseRegime::uniform_dc, pd);
        const double dc_rel = rel_diff(dc_exact, dc_form);
        worst_dc = std::max(worst_dc, dc_rel);
        dc_row += " x=" + num(x) + ":" + num(dc_rel);

        // ensemble mean of the per-realization closed form vs ensemble mean of
        // the exact sensitivity, over the same 100 fixed crosstalk draws
        double ct_exact_sum = 0.0, ct_form_sum = 0.0;
        for (std::uint64_t seed = 1000; seed < 1100; ++seed) {
            const CrosstalkMatrix ct = sample_crosstalk(dim, r2, seed);
            ct_exact_sum += engine_m(sc, no_mis, ct, none, basis, "c6 ct");
            ApproxParams pc;
            pc.ct = &ct;
            ct_form_sum += approx_sensitivity(sc, no_mis, NoiseRegime::ct_dominated, pc);
        }
        const double ct_rel = rel_diff(ct_exact_sum / 100.0, ct_form_sum / 100.0);
        worst_ct = std::max(worst_ct, ct_rel);
        ct_row += " x=" + num(x) + ":" + num(ct_rel);
    }
    c.require(worst_mis < 0.10,
              "misalignment closed form vs exact, worst rel " + num(worst_mis) +
                  " over x<=0.03 (tol 1e-1)");
    c.require(worst_dc < 0.10,
              "dark-count closed form vs exact, worst rel " + num(worst_dc) + " (tol 1e-1)");
    c.info("  dark-count rel by x:" + dc_row);
    c.require(worst_ct < 0.10, "crosstalk closed form vs exact, 100-seed ensemble means, "
                               "worst rel " +
                                   num(worst_ct) + " (tol 1e-1)");
    c.info("  crosstalk rel by x:" + ct_row);
    if (worst_dc >= 0.10 || worst_ct >= 0.10)
        c.info("  note: both forms are strict d->0 leading orders; at sigma=0.001 and "
               "|c|^2=0.0017 their validity windows end below x=0.03 (see README)");
    return c;
}

// ---------------------------------------------------------------- criterion 7
Criterion criterion_low_brightness() {
    Criterion c{7, "low-brightness-diagonal"};

    const ModeBasis basis = ModeBasis::full(2);
    const int dim = static_cast<int>(basis.full_size());
    const CrosstalkMatrix id = CrosstalkMatrix::identity(dim);
    const CrosstalkMatrix ct = sample_crosstalk(dim, 0.0017, 7);
    const DarkCounts none = DarkCounts::none(basis.size());
    const DarkCounts dark = DarkCounts::uniform_mean(1e-6, basis.size());

    double worst_bare = 0.0, worst_noisy = 0.0;
    for (double x : {0.1, 0.5, 1.0})
        for (double gamma : {0.0, 0.3})
            for (double th : {kPi / 4, kPi / 6}) {
                const Scene sc = make_scene(2.0 * x, th, 1e-4, gamma, 1.0, 1.0);
                {
                    const MomentData md = demux_moments(sc, Misalignment(), id, none, basis);
                    const double exact = sensitivity(md).m_value;
                    g_chain.observe(sc, exact, "c7 bare");
                    worst_bare = std::max(worst_bare,
                                          rel_diff(exact, sensitivity_low_brightness(md)));
                }
                {
                    const MomentData md = demux_moments(sc, Misalignment(), ct, dark, basis);
                    const double exact = sensitivity(md).m_value;
                    g_chain.observe(sc, exact, "c7 noisy");
                    worst_noisy = std::max(worst_noisy,
                                           rel_diff(exact, sensitivity_low_brightness(md)));
                }
            }
    c.require(worst_bare < 1e-3, "noiseless N kappa = 1e-4: exact vs diagonal form, worst rel " +
                                     num(worst_bare) + " (tol 1e-3)");
    c.require(worst_noisy < 1e-3, "with crosstalk + dark counts: worst rel " + num(worst_noisy) +
                                      " (tol 1e-3)");
    return c;
}

// ---------------------------------------------------------------- criterion 8
Criterion criterion_dmin_scaling() {
    Criterion c{8, "dmin-scaling-laws"};

    const ModeBasis basis = ModeBasis::full(2);
    const int dim = static_cast<int>(basis.full_size());
    const CrosstalkMatrix id = CrosstalkMatrix::identity(dim);
    const DarkCounts none = DarkCounts::none(basis.size());
    DminQuery q;
    q.scan.x_lo = 1e-5;

    auto sweep = [&](double lo, int decades, const std::function<double(double, long)>& solve,
                     bool mu_sweep) {
        std::vector<double> ns, ds;
        for (int i = 0; i <= 8; ++i) {
            const double nd = lo * std::pow(10.0, decades * i / 8.0);
            if (mu_sweep) {
                // vary repetitions at 2 N kappa = 1
                ds.push_back(solve(0.5, std::lround(nd)));
            } else {
                // vary brightness at mu = 1, N_det = 2 N kappa
                ds.push_back(solve(nd / 2.0, 1));
            }
            ns.push_back(nd);
        }
        return loglog_fit(ns, ds);
    };

    // ideal, brightness sweep over N_det in [1e2, 1e4]
    {
        const auto [slope, coeff] = sweep(
            1e2, 2,
            [&](double nk, long mu) {
                const Scene sc = scene_at(0.5, kPi / 4, nk, 0.0);
                DminQuery qi = q;
                qi.mu = mu;
                return dmin_solve(sc, Misalignment(), id, none, basis, qi);
            },
            false);
        c.require(std::abs(slope + 0.5) < 0.02,
                  "ideal d_min ~ N^-1/2: fitted slope " + num(slope) + " (tol +-0.02), coeff " +
                      num(coeff));
    }
    // direct imaging, repetition sweep at 2 N kappa = 1 over [1e5, 1e7]
    {
        const PixelGrid grid(50, 3.0);
        const auto [slope, coeff] = sweep(
            1e5, 2,
            [&](double nk, long mu) {
                const Scene sc = scene_at(0.5, kPi / 4, nk, 0.0);
                DminQuery qi = q;
                qi.mu = mu;
                return dmin_solve_direct_imaging(sc, grid, qi);
            },
            true);
        const double want = std::pow(0.5, 0.25);
        c.require(std::abs(slope + 0.25) < 0.02 && rel_diff(coeff, want) < 0.02,
                  "direct imaging d_min ~ (1/2 N)^1/4 w: slope " + num(slope) +
                      " (tol +-0.02), coeff " + num(coeff) + " vs " + num(want) + " (tol 2e-2)");
    }
    // misalignment, repetition sweep over [1e4, 1e6]
    {
        const Misalignment mis(0.02, kPi / 4);
        const auto [slope, coeff] = sweep(
            1e4, 2,
            [&](double nk, long mu) {
                const Scene sc = scene_at(0.5, kPi / 4, nk, 0.0);
                DminQuery qi = q;
                qi.mu = mu;
                return dmin_solve(sc, mis, id, none, basis, qi);
            },
            true);
        (void)coeff;
        c.require(std::abs(slope + 0.25) < 0.02,
                  "misalignment d_min ~ mu^-1/4: fitted slope " + num(slope) + " (tol +-0.02)");
    }
    // crosstalk, repetition sweep over [1e4, 1e6]
    {
        const CrosstalkMatrix ct = sample_crosstalk(dim, 0.0017, 1000);
        const auto [slope, coeff] = sweep(
            1e4, 2,
            [&](double nk, long mu) {
                const Scene sc = scene_at(0.5, kPi / 4, nk, 0.0);
                DminQuery qi = q;
                qi.mu = mu;
                return dmin_solve(sc, Misalignment(), ct, none, basis, qi);
            },
            true);
        (void)coeff;
        c.require(std::abs(slope + 0.25) < 0.02,
                  "crosstalk d_min ~ mu^-1/4: fitted slope " + num(slope) + " (tol +-0.02)");
    }
    // dark counts N^dc = 1: brightness sweep at mu = 1 over N_det in [1e3, 1e5]
    {
        const DarkCounts dc = DarkCounts::uniform_mean(1.0, basis.size());
        const auto [slope_n, coeff_n] = sweep(
            1e3, 2,
            [&](double nk, long mu) {
                const Scene sc = scene_at(0.5, kPi / 4, nk, 0.0);
                DminQuery qi = q;
                qi.mu = mu;
                return dmin_solve(sc, Misalignment(), id, dc, basis, qi);
            },
            false);
        (void)coeff_n;
        c.require(std::abs(slope_n + 0.5) < 0.03,
                  "dark counts (N^dc=1) brightness sweep d_min ~ N^-1/2: slope " + num(slope_n) +
                      " (tol +-0.03)");
        const auto [slope_mu, coeff_mu] = sweep(
            1e3, 2,
            [&](double nk, long mu) {
                const Scene sc = scene_at(0.5, kPi / 4, nk, 0.0);
                DminQuery qi = q;
                qi.mu = mu;
                return dmin_solve(sc, Misalignment(), id, dc, basis, qi);
            },
            true);
        (void)coeff_mu;
        c.require(std::abs(slope_mu + 0.25) < 0.03,
                  "dark counts (N^dc=1) repetition sweep d_min ~ mu^-1/4: slope " + num(slope_mu) +
                      " (tol +-0.03)");
    }
    return c;
}

// ---------------------------------------------------------------- criterion 9
Criterion criterion_coefficient_structure() {
    Criterion c{9, "coefficient-structure"};

    // noiseless: coefficients with equal i+j coincide
    double worst_group = 0.0;
    for (double x : {0.2, 0.9})
        for (double gamma : {0.0, 0.3}) {
            const Scene sc = scene_at(x, kPi / 4, 1.5, gamma);
            const ModeBasis basis = ideal_active_modes(sc, 3);
            const Eigen::VectorXd m = coefficients_ideal(sc, 3);
            for (int total = 0; total <= 6; ++total) {
                double lo = 1e300, hi = -1e300;
                for (std::size_t k = 0; k < basis.size(); ++k) {
                    const auto [n1, m1] = basis.mode(k);
                    if (n1 + m1 != total) continue;
                    lo = std::min(lo, m[static_cast<Eigen::Index>(k)]);
                    hi = std::max(hi, m[static_cast<Eigen::Index>(k)]);
                }
                if (hi >= lo) worst_group = std::max(worst_group, hi - lo);
            }
        }
    c.require(worst_group < 1e-12,
              "noiseless coefficients grouped by i+j, worst in-group spread " + num(worst_group) +
                  " (tol 1e-12)");

    // noisy small-d: ensemble mean |m| dominated by exactly {m_01, m_10}
    const ModeBasis basis = ModeBasis::full(2);
    const int dim = static_cast<int>(basis.full_size());
    const Misalignment mis(0.02, kPi / 4);
    double worst_ratio = 0.0;
    bool pair_ok = true;
    for (double x : {0.005, 0.01, 0.02}) {
        const Scene sc = scene_at(x, kPi / 4, 1.5, 0.0);
        const DarkCounts dark = DarkCounts::uniform_sigma(0.001, sc, basis.size());
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(basis.size()));
        for (std::uint64_t seed = 1000; seed < 1100; ++seed) {
            const CrosstalkMatrix ct = sample_crosstalk(dim, 0.0017, seed);
            const SensitivityResult r =
                sensitivity(demux_moments(sc, mis, ct, dark, basis));
            g_chain.observe(sc, r.m_value, "c9 noisy");
            acc += r.coeffs.cwiseAbs();
        }
        acc /= 100.0;
        double cmax = 0.0, others = 0.0;
        std::size_t k01 = 0, k10 = 0;
        for (std::size_t k = 0; k < basis.size(); ++k) {
            const auto [n1, m1] = basis.mode(k);
            if (n1 == 0 && m1 == 1) k01 = k;
            if (n1 == 1 && m1 == 0) k10 = k;
            cmax = std::max(cmax, acc[static_cast<Eigen::Index>(k)]);
        }
        for (std::size_t k = 0; k < basis.size(); ++k)
            if (k != k01 && k != k10)
                others = std::max(others, acc[static_cast<Eigen::Index>(k)]);
        const double top = std::max(acc[static_cast<Eigen::Index>(k01)],
                                    acc[static_cast<Eigen::Index>(k10)]);
        if (top < cmax) pair_ok = false;
        worst_ratio = std::max(worst_ratio, others / cmax);
    }
    c.require(pair_ok && worst_ratio < 0.10,
              "noisy Q=2 small-d ensemble: {m_01, m_10} dominate, largest other/max ratio " +
                  num(worst_ratio) + " (tol 1e-1)");
    return c;
}

// --------------------------------------------------------------- criterion 10
Criterion criterion_chain_inequality() {
    Criterion c{10, "chain-inequality-vs-asymptote"};
    c.require(g_chain.violations == 0,
              "every equal-brightness M <= infinite-Q asymptote + 1e-9: " +
                  std::to_string(g_chain.checked) + " checks, " +
                  std::to_string(g_chain.violations) + " violations, tightest margin " +
                  num(-g_chain.worst_excess) + " [" + g_chain.worst_at + "]");
    return c;
}

} // namespace

int main() {
    std::printf("sensitivity library acceptance suite (v%s)\n\n", version_string);

    std::vector<Criterion> results;
    results.push_back(criterion_qfi_saturation());
    results.push_back(criterion_closed_vs_engine());
    results.push_back(criterion_structured_inverses());
    results.push_back(criterion_mc_oracle());
    results.push_back(criterion_direct_imaging_family());
    results.push_back(criterion_noisy_panels());
    results.push_back(criterion_low_brightness());
    results.push_back(criterion_dmin_scaling());
    results.push_back(criterion_coefficient_structure());
    results.push_back(criterion_chain_inequality());

    int failed = 0;
    for (const Criterion& c : results) {
        std::printf("%s  %2d  %s\n", c.pass ? "PASS" : "FAIL", c.id, c.name);
        for (const std::string& note : c.notes) std::printf("        %s\n", note.c_str());
        if (!c.pass) ++failed;
    }
    std::printf("\n%d/%zu criteria passed\n", static_cast<int>(results.size()) - failed,
                results.size());
    return failed == 0 ? 0 : 1;
}
