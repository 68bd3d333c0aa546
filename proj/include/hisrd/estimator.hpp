#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "hisrd/errors.hpp"
#include "hisrd/rays.hpp"
#include "hisrd/sampling.hpp"
#include "hisrd/specfun.hpp"

namespace hisrd {

enum class Method { mc, srd, hisrd };

[[nodiscard]] inline const char* method_name(Method m) {
    switch (m) {
        case Method::mc: return "mc";
        case Method::srd: return "srd";
        case Method::hisrd: return "hisrd";
    }
    return "?";
}

/// A chance constraint max_j g_j(u, ξ) ≤ 0 with every g_j affine in ξ, bound
/// at a fixed parameter u. Along the ray ξ = ξ̄ + z + r·L_K v the constraint
/// values are alpha(z) + r·beta(v).
///
/// Remainder realizations are passed as N(0,1) coefficient columns of length
/// remainder_dim(); the model maps them to the field. Directions v have
/// length sphere_dim(). Implementations must be safe for concurrent const use.
class AffineConstraintModel {
public:
    virtual ~AffineConstraintModel() = default;

    [[nodiscard]] virtual Index constraint_count() const = 0;
    [[nodiscard]] virtual Index sphere_dim() const = 0;
    [[nodiscard]] virtual Index remainder_dim() const = 0;
    [[nodiscard]] virtual Index control_dim() const { return 0; }

    /// alpha (M × B) for remainder coefficient columns z (remainder_dim × B).
    virtual void eval_alpha(const Eigen::Ref<const Matrix>& z, Eigen::Ref<Matrix> alpha) const = 0;

    /// beta (M × B) for direction columns v (sphere_dim × B). Linear in v.
    virtual void eval_beta(const Eigen::Ref<const Matrix>& v, Eigen::Ref<Matrix> beta) const = 0;

    /// Constraint values at full Gaussian coefficient columns g, laid out as
    /// (sphere_dim coefficients, remainder_dim coefficients).
    virtual void eval_full(const Eigen::Ref<const Matrix>& g, Eigen::Ref<Matrix> values) const {
        const Index k = sphere_dim();
        Matrix b(constraint_count(), g.cols());
        eval_alpha(g.bottomRows(remainder_dim()), values);
        eval_beta(g.topRows(k), b);
        values += b;
    }

    /// g_j(u, ξ̄): alpha at z = 0.
    [[nodiscard]] virtual Vector center_values() const {
        Matrix a(constraint_count(), 1);
        eval_alpha(Matrix::Zero(remainder_dim(), 1), a);
        return a.col(0);
    }

    /// ∇_u g_j(u, ξ̄ + z + rho·L_K v), written into out (length control_dim()).
    virtual void eval_grads(Index j, double rho, const Eigen::Ref<const Vector>& v,
                            const Eigen::Ref<const Vector>& z, Eigen::Ref<Vector> out) const {
        (void)j, (void)rho, (void)v, (void)z;
        out.setZero();
    }

    /// True if ∇_u g_j does not depend on (rho, v, z). The estimator then
    /// accumulates per-constraint weights and queries each gradient once.
    [[nodiscard]] virtual bool separable_gradient() const { return false; }

    /// Σ_j weights_j ∇_u g_j for a separable model. Models whose gradients are
    /// rows of a linear solve can override this with a single combined solve.
    [[nodiscard]] virtual Vector combine_gradients(const Vector& weights) const {
        const Vector zv = Vector::Zero(sphere_dim());
        const Vector zz = Vector::Zero(remainder_dim());
        Vector out = Vector::Zero(control_dim());
        Vector gj(control_dim());
        for (Index j = 0; j < weights.size(); ++j) {
            if (weights(j) == 0.0) continue;
            eval_grads(j, 0.0, zv, zz, gj);
            out += weights(j) * gj;
        }
        return out;
    }
};

struct EstimateReport {
    double value = 0.0;
    double std_error = 0.0;
    double variance = 0.0;  // per-sample contribution variance
    Index n_samples = 0;
    Method method = Method::hisrd;
    std::optional<Vector> gradient;
    std::optional<Vector> per_sample;
    Index division_hazards = 0;
    Index zero_directions = 0;
};

struct VarianceSplit {
    double v_total = 0.0;
    double v_srd = 0.0;
    double v_rem = 0.0;
    double v_total_prime = 0.0;  // variance of the per-remainder conditional estimates
    double se_v_srd = 0.0;
    double se_v_rem = 0.0;
    double estimate = 0.0;  // nested estimator over all draws
    bool v_rem_clamped = false;
    Index n_rem = 0;
    Index n_srd = 0;
    Index repeats = 0;
};

struct EstimatorOptions {
    Index chunk = 256;
    int threads = 1;
    bool keep_per_sample = false;
};

namespace detail {

/// Runs fn(chunk_index, begin, end) over [0, n) in fixed-size chunks. Work is
/// spread over threads but results must be reduced by chunk index, so the
/// outcome does not depend on the thread count.
inline void for_each_chunk(Index n, Index chunk, int threads,
                           const std::function<void(Index, Index, Index)>& fn) {
    const Index n_chunks = (n + chunk - 1) / chunk;
    auto body = [&](Index c) { fn(c, c * chunk, std::min(n, (c + 1) * chunk)); };
    if (threads <= 1 || n_chunks <= 1) {
        for (Index c = 0; c < n_chunks; ++c) body(c);
        return;
    }
    std::atomic<Index> next{0};
    std::exception_ptr err;
    std::atomic<bool> failed{false};
    std::vector<std::thread> pool;
    const int nt = static_cast<int>(std::min<Index>(threads, n_chunks));
    for (int t = 0; t < nt; ++t) {
        pool.emplace_back([&] {
            for (Index c = next++; c < n_chunks && !failed; c = next++) {
                try {
                    body(c);
                } catch (...) {
                    if (!failed.exchange(true)) err = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
}

// Mean / M2 accumulator merged in a fixed order (Chan et al.).
struct Moments {
    double n = 0.0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double x) {
        n += 1.0;
        const double d = x - mean;
        mean += d / n;
        m2 += d * (x - mean);
    }

    void merge(const Moments& o) {
        if (o.n == 0.0) return;
        const double tot = n + o.n;
        const double d = o.mean - mean;
        mean += d * o.n / tot;
        m2 += o.m2 + d * d * n * o.n / tot;
        n = tot;
    }

    [[nodiscard]] double variance() const { return n > 1.0 ? m2 / (n - 1.0) : 0.0; }
};

inline void check_center(const AffineConstraintModel& model) {
    const Vector c = model.center_values();
    for (Index j = 0; j < c.size(); ++j) {
        if (!(c(j) < 0.0)) {
            throw CenterInfeasible("constraint " + std::to_string(j) + " has g_j(u, mean) = " +
                                   std::to_string(c(j)) + " >= 0");
        }
    }
}

inline double ray_scale(const double* a, const double* b, Index m) {
    double s = 1.0;
    for (Index j = 0; j < m; ++j) {
        if (std::isfinite(a[j])) s = std::max(s, std::fabs(a[j]));
        s = std::max(s, std::fabs(b[j]));
    }
    return s;
}

struct ChunkResult {
    Moments moments;
    Vector grad;       // non-separable gradient sum
    Vector weights;    // separable: per-constraint weight sums
    Index hazards = 0;
    Index zero_dirs = 0;
};

enum class Mode { srd, hisrd };

inline EstimateReport run_ray_estimator(const AffineConstraintModel& model, Index N, const SamplerSpec& spec,
                                        const EstimatorOptions& opt, Mode mode, bool with_gradient) {
    HISRD_REQUIRE(N >= 2, "estimator: N must be >= 2");
    HISRD_REQUIRE(opt.chunk >= 1, "estimator: chunk must be >= 1");
    check_center(model);
    const Index M = model.constraint_count();
    const Index K = model.sphere_dim();
    HISRD_REQUIRE(K >= 1, "estimator: sphere dimension must be >= 1");
    const Index R = mode == Mode::hisrd ? model.remainder_dim() : 0;
    const Index D = K + R;
    const Index P = model.control_dim();
    const bool separable = with_gradient && model.separable_gradient();
    const int dof = static_cast<int>(K);
    const Vector center = R == 0 ? model.center_values() : Vector();

    const Index n_chunks = (N + opt.chunk - 1) / opt.chunk;
    std::vector<ChunkResult> results(static_cast<std::size_t>(n_chunks));
    Vector per_sample;
    if (opt.keep_per_sample) per_sample.resize(N);

    for_each_chunk(N, opt.chunk, opt.threads, [&](Index ci, Index begin, Index end) {
        const Index B = end - begin;
        ChunkResult& res = results[static_cast<std::size_t>(ci)];
        if (with_gradient) {
            if (separable) res.weights = Vector::Zero(M);
            else res.grad = Vector::Zero(P);
        }
        Matrix G(D, B);
        fill_joint_gaussian(spec, static_cast<std::uint64_t>(begin), G);
        auto V = G.topRows(K);
        res.zero_dirs += normalize_columns(V);
        Matrix alpha;
        if (R > 0) {
            alpha.resize(M, B);
            model.eval_alpha(G.bottomRows(R), alpha);
        }
        Matrix beta(M, B);
        model.eval_beta(V, beta);
        Vector gj(P);
        Vector zero_z;
        for (Index c = 0; c < B; ++c) {
            const double* a = R > 0 ? alpha.col(c).data() : center.data();
            const double* b = beta.col(c).data();
            const RaySegment seg = intersect_raw(a, b, M);
            const double contrib = segment_probability(seg, dof);
            res.moments.add(contrib);
            if (opt.keep_per_sample) per_sample(begin + c) = contrib;
            if (!with_gradient || !seg.nonempty) continue;

            const double scale = ray_scale(a, b, M);
            auto add_term = [&](Index j, double rho, double pdf_sign) {
                const double bj = b[j];
                if (std::fabs(bj) < 1e-12 * scale) {
                    ++res.hazards;
                    return;
                }
                const double w = pdf_sign * specfun::chi_pdf(dof, rho) / bj;
                if (w == 0.0) return;
                if (separable) {
                    res.weights(j) += w;
                } else {
                    if (R > 0) {
                        model.eval_grads(j, rho, V.col(c), G.bottomRows(R).col(c), gj);
                    } else {
                        if (zero_z.size() == 0) zero_z = Vector::Zero(model.remainder_dim());
                        model.eval_grads(j, rho, V.col(c), zero_z, gj);
                    }
                    res.grad += w * gj;
                }
            };
            if (seg.j_out) add_term(*seg.j_out, seg.rho_out, -1.0);
            if (seg.j_in) add_term(*seg.j_in, seg.rho_in, 1.0);
        }
    });

    EstimateReport rep;
    rep.method = mode == Mode::hisrd ? Method::hisrd : Method::srd;
    rep.n_samples = N;
    Moments total;
    Vector grad = Vector::Zero(P);
    Vector weights = separable ? Vector::Zero(M) : Vector();
    for (const auto& r : results) {
        total.merge(r.moments);
        rep.division_hazards += r.hazards;
        rep.zero_directions += r.zero_dirs;
        if (with_gradient) {
            if (separable) weights += r.weights;
            else grad += r.grad;
        }
    }
    rep.value = std::clamp(total.mean, 0.0, 1.0);
    rep.variance = total.variance();
    rep.std_error = std::sqrt(rep.variance / static_cast<double>(N));
    if (with_gradient) {
        if (separable) {
            grad = model.combine_gradients(weights);
        }
        rep.gradient = grad / static_cast<double>(N);
    }
    if (opt.keep_per_sample) rep.per_sample = std::move(per_sample);
    return rep;
}

}  // namespace detail

/// Plain Monte Carlo: fraction of full-field samples with max_j g_j ≤ 0.
[[nodiscard]] inline EstimateReport estimate_mc(const AffineConstraintModel& model, Index N, const SamplerSpec& spec,
                                                const EstimatorOptions& opt = {}) {
    HISRD_REQUIRE(N >= 2, "estimate_mc: N must be >= 2");
    const Index M = model.constraint_count();
    const Index D = model.sphere_dim() + model.remainder_dim();
    const Index n_chunks = (N + opt.chunk - 1) / opt.chunk;
    std::vector<Index> hits(static_cast<std::size_t>(n_chunks), 0);
    Vector per_sample;
    if (opt.keep_per_sample) per_sample.resize(N);
    detail::for_each_chunk(N, opt.chunk, opt.threads, [&](Index ci, Index begin, Index end) {
        const Index B = end - begin;
        Matrix G(D, B);
        fill_joint_gaussian(spec, static_cast<std::uint64_t>(begin), G);
        Matrix vals(M, B);
        model.eval_full(G, vals);
        Index h = 0;
        for (Index c = 0; c < B; ++c) {
            const bool ok = (vals.col(c).array() <= 0.0).all();
            h += ok ? 1 : 0;
            if (opt.keep_per_sample) per_sample(begin + c) = ok ? 1.0 : 0.0;
        }
        hits[static_cast<std::size_t>(ci)] = h;
    });
    Index total = 0;
    for (Index h : hits) total += h;
    EstimateReport rep;
    rep.method = Method::mc;
    rep.n_samples = N;
    rep.value = static_cast<double>(total) / static_cast<double>(N);
    rep.variance = rep.value * (1.0 - rep.value);
    rep.std_error = std::sqrt(rep.variance / static_cast<double>(N));
    if (opt.keep_per_sample) rep.per_sample = std::move(per_sample);
    return rep;
}

/// Finite-dimensional SRD on the model's sphere subspace with the remainder
/// dropped (z = 0). Biased unless the remainder vanishes.
[[nodiscard]] inline EstimateReport estimate_srd(const AffineConstraintModel& model, Index N, const SamplerSpec& spec,
                                                 const EstimatorOptions& opt = {}) {
    return detail::run_ray_estimator(model, N, spec, opt, detail::Mode::srd, false);
}

/// Hybrid estimator: SRD along the sphere subspace, Monte Carlo on the remainder.
[[nodiscard]] inline EstimateReport estimate_hisrd(const AffineConstraintModel& model, Index N,
                                                   const SamplerSpec& spec, const EstimatorOptions& opt = {}) {
    return detail::run_ray_estimator(model, N, spec, opt, detail::Mode::hisrd, false);
}

/// hiSRD value and its gradient with respect to the model's control
/// parameters, both from the same samples.
[[nodiscard]] inline EstimateReport gradient_hisrd(const AffineConstraintModel& model, Index N,
                                                   const SamplerSpec& spec, const EstimatorOptions& opt = {}) {
    return detail::run_ray_estimator(model, N, spec, opt, detail::Mode::hisrd, true);
}

/// Nested estimator: for each of n_rem·repeats remainder draws, n_srd sphere
/// draws. V_SRD is the mean within-draw variance, V'_total the variance of the
/// per-draw means, and V_rem = V'_total - V_SRD / n_srd.
[[nodiscard]] inline VarianceSplit variance_split(const AffineConstraintModel& model, Index n_rem, Index n_srd,
                                                  Index repeats, const SamplerSpec& spec,
                                                  const EstimatorOptions& opt = {}) {
    HISRD_REQUIRE(n_rem >= 2 && n_srd >= 2, "variance_split: n_rem and n_srd must be >= 2");
    HISRD_REQUIRE(repeats >= 1, "variance_split: repeats must be >= 1");
    detail::check_center(model);
    const Index M = model.constraint_count();
    const Index K = model.sphere_dim();
    const Index R = model.remainder_dim();
    const int dof = static_cast<int>(K);
    const Index groups = n_rem * repeats;
    const SamplerSpec rem_spec{spec.kind, derive_seed(spec.seed, 1), spec.first_index};
    const SamplerSpec sph_spec{spec.kind, derive_seed(spec.seed, 2), spec.first_index * static_cast<std::uint64_t>(n_srd)};

    Vector means(groups);
    Vector vars(groups);
    const Index chunk = std::max<Index>(1, opt.chunk / n_srd);
    detail::for_each_chunk(groups, chunk, opt.threads, [&](Index, Index begin, Index end) {
        Matrix Z(R, 1);
        Matrix alpha(M, 1);
        Matrix V(K, n_srd);
        Matrix beta(M, n_srd);
        for (Index a = begin; a < end; ++a) {
            if (R > 0) {
                fill_joint_gaussian(rem_spec, static_cast<std::uint64_t>(a), Z);
                model.eval_alpha(Z, alpha);
            } else {
                alpha.col(0) = model.center_values();
            }
            fill_joint_gaussian(sph_spec, static_cast<std::uint64_t>(a * n_srd), V);
            normalize_columns(V);
            model.eval_beta(V, beta);
            detail::Moments m;
            for (Index b = 0; b < n_srd; ++b) {
                m.add(segment_probability(detail::intersect_raw(alpha.data(), beta.col(b).data(), M), dof));
            }
            means(a) = m.mean;
            vars(a) = m.variance();
        }
    });

    VarianceSplit out;
    out.n_rem = n_rem;
    out.n_srd = n_srd;
    out.repeats = repeats;
    detail::Moments mm;
    detail::Moments vm;
    for (Index a = 0; a < groups; ++a) {
        mm.add(means(a));
        vm.add(vars(a));
    }
    out.estimate = mm.mean;
    out.v_srd = vm.mean;
    out.v_total_prime = mm.variance();
    const double g = static_cast<double>(groups);
    out.se_v_srd = std::sqrt(vm.variance() / g);
    detail::Moments sq;
    for (Index a = 0; a < groups; ++a) sq.add((means(a) - mm.mean) * (means(a) - mm.mean));
    const double se_prime = std::sqrt(sq.variance() / g);
    out.se_v_rem = std::sqrt(se_prime * se_prime + std::pow(out.se_v_srd / static_cast<double>(n_srd), 2));
    const double vr = out.v_total_prime - out.v_srd / static_cast<double>(n_srd);
    out.v_rem_clamped = vr < 0.0;
    out.v_rem = std::max(vr, 0.0);
    out.v_total = out.v_rem + out.v_srd;
    return out;
}

}  // namespace hisrd
