#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "hisrd/errors.hpp"
#include "hisrd/estimator.hpp"
#include "hisrd/gp.hpp"
#include "hisrd/optim.hpp"

namespace hisrd::gp {

struct OptimizeSettings {
    Index K = 10;
    Index N = 2000;
    std::uint64_t seed = 1;
    SampleKind sampler = SampleKind::mc;
    EstimatorOptions estimator{};
    optim::AugLagOptions auglag{};
    double fd_step = 1e-6;
    int max_shrink = 20;
};

struct OptimizeStep {
    int outer = 0;
    int inner = 0;
    KernelParams u;
    double nll = 0.0;
};

struct OptimizeResult {
    KernelParams start;
    int shrink_steps = 0;
    KernelParams u;
    double nll = 0.0;
    double phi = 1.0;          // last in-loop estimate (fixed samples)
    double fit_error = 0.0;    // ‖ξ*(X; u) - y‖∞
    optim::Status status = optim::Status::max_iterations;
    int outer_iterations = 0;
    std::vector<OptimizeStep> trace;
};

namespace detail {

/// φ̃_N(u) and its gradient on a fixed sample set, with a one-entry cache.
class ChanceOracle {
public:
    ChanceOracle(const GpProblem& p, const GpReference& ref, const OptimizeSettings& s)
        : p_(p), ref_(ref), s_(s) {}

    void reseed(std::uint64_t seed) {
        seed_ = seed;
        cache_.reset();
    }

    double value(const KernelParams& u, Eigen::Vector3d* grad) {
        if (cache_ && cache_->u == u && (grad == nullptr || cache_->grad)) {
            if (grad) *grad = *cache_->grad;
            return cache_->value;
        }
        const SamplerSpec spec{s_.sampler, seed_, 0};
        const GpConstraintModel model(p_, ref_, u, s_.K, grad != nullptr);
        Entry e{u, 0.0, std::nullopt};
        if ((model.center_values().array() >= 0.0).any()) {
            // Posterior mean below the bound: the estimator is undefined here
            // and the iterate is far outside the feasible region anyway.
            e.grad = Eigen::Vector3d::Zero();
            if (grad) *grad = *e.grad;
        } else if (grad) {
            const EstimateReport r = gradient_hisrd(model, s_.N, spec, s_.estimator);
            e.value = r.value;
            e.grad = Eigen::Vector3d(*r.gradient);
            *grad = *e.grad;
        } else {
            e.value = estimate_hisrd(model, s_.N, spec, s_.estimator).value;
        }
        cache_ = e;
        return e.value;
    }

private:
    struct Entry {
        KernelParams u;
        double value;
        std::optional<Eigen::Vector3d> grad;
    };
    const GpProblem& p_;
    const GpReference& ref_;
    const OptimizeSettings& s_;
    std::uint64_t seed_ = 0;
    std::optional<Entry> cache_;
};

}  // namespace detail

/// Minimizes nll(u) subject to φ(u) ≥ p_target (when the problem has a finite
/// lower bound) and |ξ*(x_i; u) - y_i| ≤ fit_eps. The chance constraint uses
/// hiSRD with a fixed sample set per outer loop; nll and the fit residuals
/// use central differences. If φ at u0 is below p_target, σ is halved until
/// it is not.
[[nodiscard]] inline OptimizeResult optimize_kernel(const GpProblem& p, const OptimizeSettings& s = {}) {
    OptimizeResult out;
    const bool chance = p.constrained();
    std::optional<GpReference> ref;
    std::optional<detail::ChanceOracle> oracle;
    KernelParams start = p.u0;
    if (chance) {
        ref = build_reference(p);
        oracle.emplace(p, *ref, s);
        oracle->reseed(derive_seed(s.seed, 99));
        int shrink = 0;
        while (oracle->value(start, nullptr) < p.p_target) {
            if (shrink == s.max_shrink) throw InfeasibleStart("optimize_kernel: no feasible start after shrinking sigma");
            start.log_sigma -= std::log(2.0);
            ++shrink;
        }
        out.shrink_steps = shrink;
    }
    out.start = start;

    const double cscale = 1.0 / (1.0 - p.p_target);
    const double fscale = 1.0 / p.fit_eps;
    const Index n_obs = p.obs_x.size();

    const optim::Objective objective = [&](const Vector& x, Vector* grad) {
        const auto f = [&](const Vector& y) { return nll(KernelParams::from(y), p); };
        if (grad) *grad = optim::fd_gradient(f, x, s.fd_step);
        return f(x);
    };
    const optim::Constraints constraints = [&](const Vector& x, Matrix* jac) {
        const Index m = 2 * n_obs + (chance ? 1 : 0);
        Vector c(m);
        const auto fit = [&](const Vector& y) { return Vector(fit_residuals(KernelParams::from(y), p)); };
        const Vector r = fit(x);
        c.head(n_obs) = (p.fit_eps - r.array()) * fscale;
        c.segment(n_obs, n_obs) = (p.fit_eps + r.array()) * fscale;
        if (jac) {
            jac->resize(m, x.size());
            const Matrix jr = optim::fd_jacobian(fit, x, s.fd_step);
            jac->topRows(n_obs) = -fscale * jr;
            jac->middleRows(n_obs, n_obs) = fscale * jr;
        }
        if (chance) {
            Eigen::Vector3d g;
            const double phi = oracle->value(KernelParams::from(x), jac ? &g : nullptr);
            c(m - 1) = (phi - p.p_target) * cscale;
            if (jac) jac->row(m - 1) = cscale * g.transpose();
        }
        return c;
    };

    const optim::AugLagResult al = optim::augmented_lagrangian(
        objective, constraints, start.vec(), s.auglag, [&](int k) {
            if (chance) oracle->reseed(derive_seed(s.seed, 100 + static_cast<std::uint64_t>(k)));
        });

    out.u = KernelParams::from(al.x);
    out.nll = al.f;
    out.status = al.status;
    out.outer_iterations = al.outer_iterations;
    out.fit_error = fit_residuals(out.u, p).lpNorm<Eigen::Infinity>();
    if (chance) out.phi = al.c(al.c.size() - 1) / cscale + p.p_target;
    out.trace.reserve(al.trace.size());
    for (const auto& st : al.trace) out.trace.push_back({st.outer, st.inner, KernelParams::from(st.x), st.f});
    return out;
}

}  // namespace hisrd::gp
