#pragma once

// Physical configuration of the two-source estimation problem and the
// Hermite-Gauss measurement basis bookkeeping.
//
// Sign conventions used throughout the library:
//   * the sources sit at +-r0 = +-(d/2)(cos(theta), sin(theta));
//   * the source at +r0 emits (1-gamma)N mean photons, the one at -r0
//     emits (1+gamma)N, so the total is always 2N;
//   * the demultiplexer axis may be shifted by r_s = d_s (cos, sin)(theta_s)
//     from the source centroid, so overlaps are evaluated at +-r0 - r_s;
//   * x = d/(2w) and x_s = d_s/(2w) are the dimensionless separations.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "superres/errors.hpp"

namespace superres {

namespace detail {

// cos/sin with values a few ulps away from multiples of pi/2 snapped to exact
// {0, +-1}. Downstream code detects axis-aligned geometries by testing the
// snapped values against literal zero, so mode removal is structural (it can
// not flicker along a d-sweep) while theta values genuinely off-axis are
// untouched.
struct SnappedTrig {
    double c;
    double s;
};

inline SnappedTrig snap_trig(double angle) {
    double c = std::cos(angle);
    double s = std::sin(angle);
    const double tol = 4.0 * std::numeric_limits<double>::epsilon() *
                       std::max(1.0, std::fabs(angle));
    if (std::fabs(s) <= tol) {
        s = 0.0;
        c = (c > 0.0) ? 1.0 : -1.0;
    } else if (std::fabs(c) <= tol) {
        c = 0.0;
        s = (s > 0.0) ? 1.0 : -1.0;
    }
    return {c, s};
}

} // namespace detail

class Scene {
public:
    Scene(double d, double theta, double n_mean, double gamma, double kappa, double waist)
        : d_(d), theta_(theta), n_mean_(n_mean), gamma_(gamma), kappa_(kappa), waist_(waist) {
        if (!(d >= 0.0)) throw DomainError("Scene: separation d must be >= 0");
        if (!std::isfinite(theta)) throw DomainError("Scene: theta must be finite");
        if (!(n_mean > 0.0)) throw DomainError("Scene: per-source mean photon number must be > 0");
        if (!(gamma > -1.0 && gamma < 1.0))
            throw DomainError("Scene: brightness imbalance gamma must lie strictly inside (-1, 1)");
        if (!(kappa > 0.0 && kappa <= 1.0)) throw DomainError("Scene: transmissivity kappa must be in (0, 1]");
        if (!(waist > 0.0)) throw DomainError("Scene: PSF waist must be > 0");
        const auto t = detail::snap_trig(theta);
        cos_theta_ = t.c;
        sin_theta_ = t.s;
    }

    double d() const { return d_; }
    double theta() const { return theta_; }
    double n_mean() const { return n_mean_; }
    double gamma() const { return gamma_; }
    double kappa() const { return kappa_; }
    double waist() const { return waist_; }

    // Canonical dimensionless separation.
    double x() const { return d_ / (2.0 * waist_); }
    // Received photon scale N*kappa.
    double n_kappa() const { return n_mean_ * kappa_; }

    double cos_theta() const { return cos_theta_; }
    double sin_theta() const { return sin_theta_; }

    Scene with_d(double new_d) const {
        return Scene(new_d, theta_, n_mean_, gamma_, kappa_, waist_);
    }
    Scene with_n_mean(double new_n) const {
        return Scene(d_, theta_, new_n, gamma_, kappa_, waist_);
    }

private:
    double d_, theta_, n_mean_, gamma_, kappa_, waist_;
    double cos_theta_, sin_theta_;
};

inline Scene make_scene(double d, double theta, double n_mean, double gamma,
                        double kappa, double waist) {
    return Scene(d, theta, n_mean, gamma, kappa, waist);
}

class Misalignment {
public:
    Misalignment() : d_s_(0.0), theta_s_(0.0), cos_(1.0), sin_(0.0) {}
    Misalignment(double d_s, double theta_s) : d_s_(d_s), theta_s_(theta_s) {
        if (!(d_s >= 0.0)) throw DomainError("Misalignment: shift magnitude d_s must be >= 0");
        if (!std::isfinite(theta_s)) throw DomainError("Misalignment: theta_s must be finite");
        const auto t = detail::snap_trig(theta_s);
        cos_ = t.c;
        sin_ = t.s;
    }

    double d_s() const { return d_s_; }
    double theta_s() const { return theta_s_; }
    double x_s(const Scene& scene) const { return d_s_ / (2.0 * scene.waist()); }
    bool zero() const { return d_s_ == 0.0; }

    double cos_theta_s() const { return cos_; }
    double sin_theta_s() const { return sin_; }

private:
    double d_s_, theta_s_;
    double cos_, sin_;
};

// The set of measured HG indices (n, m). The ordering of `active` defines the
// row/column layout of every vector and matrix in the library: row-major with
// n as the outer index (full basis: (0,0), (0,1), ..., (0,Q), (1,0), ...).
class ModeBasis {
public:
    ModeBasis(int q_max, std::vector<std::pair<int, int>> active)
        : q_max_(q_max), active_(std::move(active)) {
        if (q_max < 0) throw DomainError("ModeBasis: q_max must be >= 0");
        for (std::size_t i = 0; i < active_.size(); ++i) {
            const auto [n, m] = active_[i];
            if (n < 0 || m < 0 || n > q_max_ || m > q_max_)
                throw DomainError("ModeBasis: active index out of range");
            for (std::size_t j = i + 1; j < active_.size(); ++j)
                if (active_[j] == active_[i])
                    throw DomainError("ModeBasis: duplicate active mode (" +
                                      std::to_string(n) + "," + std::to_string(m) + ")");
        }
    }

    static ModeBasis full(int q_max) {
        std::vector<std::pair<int, int>> act;
        act.reserve(static_cast<std::size_t>(q_max + 1) * static_cast<std::size_t>(q_max + 1));
        for (int n = 0; n <= q_max; ++n)
            for (int m = 0; m <= q_max; ++m) act.emplace_back(n, m);
        return ModeBasis(q_max, std::move(act));
    }

    int q_max() const { return q_max_; }
    std::size_t size() const { return active_.size(); }
    std::size_t full_size() const {
        return static_cast<std::size_t>(q_max_ + 1) * static_cast<std::size_t>(q_max_ + 1);
    }
    const std::vector<std::pair<int, int>>& active() const { return active_; }
    std::pair<int, int> mode(std::size_t k) const { return active_.at(k); }

    // Position of (n, m) in the full row-major layout, regardless of `active`.
    std::size_t full_index(int n, int m) const {
        return static_cast<std::size_t>(n) * static_cast<std::size_t>(q_max_ + 1) +
               static_cast<std::size_t>(m);
    }

    // Index of (n, m) within `active`, or npos when not measured.
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);
    std::size_t index_of(int n, int m) const {
        for (std::size_t k = 0; k < active_.size(); ++k)
            if (active_[k].first == n && active_[k].second == m) return k;
        return npos;
    }

    ModeBasis subset(const std::vector<std::size_t>& keep) const {
        std::vector<std::pair<int, int>> act;
        act.reserve(keep.size());
        for (std::size_t k : keep) act.push_back(active_.at(k));
        return ModeBasis(q_max_, std::move(act));
    }

private:
    int q_max_;
    std::vector<std::pair<int, int>> active_;
};

} // namespace superres
