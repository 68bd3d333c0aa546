#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <optional>

#include "hisrd/errors.hpp"
#include "hisrd/sampling.hpp"
#include "hisrd/specfun.hpp"

namespace hisrd {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Per-constraint ray data: g_j(r) = alpha_j + r · beta_j.
struct RayCoefficients {
    Vector alpha;
    Vector beta;
};

/// Feasible part [rho_in, rho_out] of a ray. Indices are 0-based.
struct RaySegment {
    double rho_in = 0.0;
    double rho_out = kInf;
    std::optional<Index> j_in;   // set iff 0 < rho_in < ∞
    std::optional<Index> j_out;  // set iff rho_out < ∞
    bool nonempty = true;
};

namespace detail {

// Core of intersect() on raw contiguous arrays.
inline RaySegment intersect_raw(const double* alpha, const double* beta, Index m) {
    double rin = 0.0;
    double rout = kInf;
    Index jin = -1;
    Index jout = -1;
    for (Index j = 0; j < m; ++j) {
        const double a = alpha[j];
        const double b = beta[j];
        if (a < 0.0 || (a == 0.0 && b <= 0.0)) {
            // inside: exits where the line crosses zero
            if (b > 0.0) {
                const double r = -a / b;
                if (r < rout) {
                    rout = r;
                    jout = j;
                }
            }
        } else if (a == 0.0) {
            // on the boundary heading outwards: exits immediately
            if (0.0 < rout) {
                rout = 0.0;
                jout = j;
            }
        } else {
            // outside: enters where the line crosses zero, never if b >= 0
            const double r = b < 0.0 ? -a / b : kInf;
            if (r > rin) {
                rin = r;
                jin = j;
            }
        }
    }
    RaySegment s;
    s.rho_in = rin;
    s.rho_out = rout;
    if (rin > 0.0 && rin < kInf) s.j_in = jin;
    if (rout < kInf) s.j_out = jout;
    s.nonempty = rin < kInf && rout > rin;
    return s;
}

}  // namespace detail

/// Feasible segment of the ray from the per-constraint entry/exit distances,
/// ties broken towards the lowest constraint index.
[[nodiscard]] inline RaySegment intersect(const RayCoefficients& rc) {
    HISRD_REQUIRE(rc.alpha.size() == rc.beta.size(), "intersect: alpha/beta size mismatch");
    HISRD_REQUIRE(rc.alpha.size() >= 1, "intersect: need at least one constraint");
    return detail::intersect_raw(rc.alpha.data(), rc.beta.data(), rc.alpha.size());
}

/// max(0, F_χK(rho_out) - F_χK(rho_in)).
[[nodiscard]] inline double segment_probability(const RaySegment& s, int K) {
    if (!s.nonempty) return 0.0;
    const double p = specfun::chi_cdf(K, s.rho_out) - (s.rho_in > 0.0 ? specfun::chi_cdf(K, s.rho_in) : 0.0);
    return p > 0.0 ? p : 0.0;
}

}  // namespace hisrd
