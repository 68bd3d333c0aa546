#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>

#include "hisrd/bound_model.hpp"
#include "hisrd/errors.hpp"
#include "hisrd/field.hpp"
#include "hisrd/linalg.hpp"
#include "hisrd/sampling.hpp"

namespace hisrd::gp {

/// u = (log l, log σ, log σ_n) of the squared-exponential kernel
/// σ² exp(-|x - x'|² / (2 l²)) + σ_n² δ.
struct KernelParams {
    double log_l = 0.0;
    double log_sigma = 0.0;
    double log_sigma_n = 0.0;

    [[nodiscard]] double l() const { return std::exp(log_l); }
    [[nodiscard]] double sigma() const { return std::exp(log_sigma); }
    [[nodiscard]] double sigma_n() const { return std::exp(log_sigma_n); }

    [[nodiscard]] Eigen::Vector3d vec() const { return {log_l, log_sigma, log_sigma_n}; }
    [[nodiscard]] static KernelParams from(const Eigen::Vector3d& v) { return {v(0), v(1), v(2)}; }

    [[nodiscard]] KernelParams shifted(int p, double h) const {
        Eigen::Vector3d v = vec();
        v(p) += h;
        return from(v);
    }

    friend bool operator==(const KernelParams&, const KernelParams&) = default;
};

/// Kernel matrix between point lists. The noise term is added only when
/// with_noise is set and X and X2 are the same object.
[[nodiscard]] inline Matrix kernel_matrix(const KernelParams& u, const Vector& X, const Vector& X2, bool with_noise) {
    const double s2 = u.sigma() * u.sigma();
    const double inv = 1.0 / (2.0 * u.l() * u.l());
    Matrix k(X.size(), X2.size());
    for (Index j = 0; j < X2.size(); ++j) {
        for (Index i = 0; i < X.size(); ++i) {
            const double d = X(i) - X2(j);
            k(i, j) = s2 * std::exp(-d * d * inv);
        }
    }
    if (with_noise && &X == &X2) k.diagonal().array() += u.sigma_n() * u.sigma_n();
    return k;
}

/// Regression target of the worked example: Runge function plus a bump.
[[nodiscard]] inline double target_function(double x) {
    const double t = 10.0 * x;
    return 1.0 / (1.0 + t * t * t * t) + 0.5 * std::exp(-100.0 * (x - 0.5) * (x - 0.5));
}

/// Offsets ε_j ~ N(0, 0.03²) of the four interior observation sites, drawn
/// from a fixed stream.
[[nodiscard]] inline std::array<double, 4> observation_offsets(std::uint64_t seed) {
    std::array<double, 4> eps{};
    SampleStream(SampleKind::mc, 4, seed).point(0, eps.data());
    for (double& e : eps) e *= 0.03;
    return eps;
}

struct GpProblem {
    Vector grid;
    Vector obs_x;
    Vector obs_y;
    KernelParams u0{-3.0, -3.0, -10.0};
    double lower_bound = -0.12;  // -inf disables the chance constraint
    double p_target = 0.95;
    double fit_eps = 0.01;
    double nugget_rel = 1e-6;    // reference nugget, relative to trace(K*)/n

    /// Observations at (j-1)/5 + eps_j (j = 1..6, eps_1 = eps_6 = 0) and 1/2,
    /// on a uniform grid of n points over [0, 1].
    [[nodiscard]] static GpProblem standard(Index n, const std::array<double, 4>& eps, double lower_bound) {
        GpProblem p;
        p.grid = Vector::LinSpaced(n, 0.0, 1.0);
        p.obs_x.resize(7);
        for (int j = 0; j < 6; ++j) p.obs_x(j) = j / 5.0 + ((j >= 1 && j <= 4) ? eps[static_cast<std::size_t>(j - 1)] : 0.0);
        p.obs_x(6) = 0.5;
        p.obs_y = p.obs_x.unaryExpr([](double x) { return target_function(x); });
        p.lower_bound = lower_bound;
        return p;
    }

    [[nodiscard]] bool constrained() const { return std::isfinite(lower_bound); }
};

struct Posterior {
    Vector mean;
    SymMatrix cov;
};

namespace detail {

struct Conditioning {
    Matrix chol;    // Cholesky factor of K_u (observations, with noise)
    Vector weights; // K_u^{-1} y
};

inline Conditioning condition(const KernelParams& u, const GpProblem& p) {
    const Matrix k = kernel_matrix(u, p.obs_x, p.obs_x, true);
    const SymMatrix ks(k);
    const CholeskyFactor c = cholesky(ks);
    Vector w = tri_solve(c.lower, tri_solve(c.lower, p.obs_y), Transpose::yes);
    return {c.lower, std::move(w)};
}

}  // namespace detail

/// Posterior mean ξ*(·; u) at arbitrary points (prior mean zero).
[[nodiscard]] inline Vector posterior_mean_at(const KernelParams& u, const GpProblem& p, const Vector& x) {
    if (p.obs_x.size() == 0) return Vector::Zero(x.size());
    const detail::Conditioning c = detail::condition(u, p);
    return kernel_matrix(u, p.obs_x, x, false).transpose() * c.weights;
}

/// Posterior mean and covariance on the problem grid. The cross-covariance
/// to grid points never carries the noise term.
[[nodiscard]] inline Posterior posterior(const KernelParams& u, const GpProblem& p) {
    Matrix prior = kernel_matrix(u, p.grid, p.grid, false);
    if (p.obs_x.size() == 0) return {Vector::Zero(p.grid.size()), SymMatrix(prior)};
    const detail::Conditioning c = detail::condition(u, p);
    const Matrix kx = kernel_matrix(u, p.obs_x, p.grid, false);
    const Matrix w = tri_solve(c.chol, kx);
    Vector mean = kx.transpose() * c.weights;
    prior.noalias() -= w.transpose() * w;
    prior = 0.5 * (prior + prior.transpose()).eval();
    return {std::move(mean), SymMatrix(std::move(prior))};
}

/// Negative log marginal likelihood ½[yᵀK⁻¹y + log|K| + N log 2π].
[[nodiscard]] inline double nll(const KernelParams& u, const GpProblem& p) {
    const detail::Conditioning c = detail::condition(u, p);
    const double quad = p.obs_y.dot(c.weights);
    const double logdet = 2.0 * c.chol.diagonal().array().log().sum();
    return 0.5 * (quad + logdet + static_cast<double>(p.obs_y.size()) * std::log(2.0 * std::numbers::pi));
}

/// ξ*(x_i; u) - y_i at the observations.
[[nodiscard]] inline Vector fit_residuals(const KernelParams& u, const GpProblem& p) {
    return posterior_mean_at(u, p, p.obs_x) - p.obs_y;
}

/// Reference field at u0: the posterior covariance with eigenvalues below
/// 1e-12·λ₁ clamped to zero, plus an isotropic nugget ε = nugget_rel·tr/n
/// that makes it full rank. S0 is the Cholesky factor of that covariance.
struct GpReference {
    std::shared_ptr<const SpectralField> field;
    Matrix S0;
    double nugget = 0.0;
    Vector lower;  // bound on the grid
};

[[nodiscard]] inline GpReference build_reference(const GpProblem& p) {
    const Posterior post = posterior(p.u0, p);
    const EigenDecomposition eig = sym_eigh(post.cov);
    const Index n = post.cov.order();
    Index rank = 0;
    if (n > 0 && eig.values(0) > 0.0) {
        while (rank < n && eig.values(rank) > 1e-12 * eig.values(0)) ++rank;
    }
    const Vector lam = eig.values.head(rank);
    const Matrix phi = eig.vectors.leftCols(rank);
    const double eps = p.nugget_rel * lam.sum() / static_cast<double>(n);
    GpReference ref;
    ref.nugget = eps;
    ref.field = std::make_shared<const SpectralField>(post.mean, phi, (lam.array() + eps).sqrt().matrix(), 0, eps);
    Matrix cov = phi * lam.asDiagonal() * phi.transpose();
    cov.diagonal().array() += eps;
    ref.S0 = cholesky(SymMatrix(0.5 * (cov + cov.transpose())), 0.0).lower;
    ref.lower = Vector::Constant(n, p.lower_bound);
    return ref;
}

/// Posterior at u mapped as an image of the reference field:
/// shift = ξ*(u), T = A(u) = S_u S0⁻¹ with S_u S_uᵀ = K*_u + ε_u I.
struct MappedPosterior {
    Vector shift;
    Matrix transform;
    double nugget = 0.0;
};

[[nodiscard]] inline MappedPosterior map_posterior(const KernelParams& u, const GpProblem& p, const GpReference& ref) {
    const Posterior post = posterior(u, p);
    const Index n = post.cov.order();
    const double eps = p.nugget_rel * std::max(post.cov.matrix().trace(), 0.0) / static_cast<double>(n);
    const CholeskyFactor su = cholesky(post.cov, eps);
    Matrix t = tri_solve(ref.S0, su.lower.transpose(), Transpose::yes).transpose();
    return {post.mean, std::move(t), su.jitter};
}

/// Lower-bound chance constraint ξ̲ ≤ ξ_post(x_m; u), m = 1..n, written as an
/// affine image of the reference field. With gradients enabled, the u-
/// derivatives of shift and A(u) are taken by central differences.
class GpConstraintModel : public FieldBoundModel {
public:
    static constexpr double kFdStep = 1e-5;

    GpConstraintModel(const GpProblem& p, const GpReference& ref, const KernelParams& u, Index K,
                      bool with_gradient = false)
        : GpConstraintModel(p, ref, u, K, with_gradient, mapped(u, p, ref)) {}

    [[nodiscard]] Index control_dim() const override { return 3; }

    [[nodiscard]] const KernelParams& params() const noexcept { return u_; }
    [[nodiscard]] bool has_gradient() const noexcept { return !dshift_.empty(); }

    /// ∇_u g_j = -∂/∂u [shift + A(u) ξ_R(z) + ρ A(u) L_K v]_j.
    void eval_grads(Index j, double rho, const Eigen::Ref<const Vector>& v, const Eigen::Ref<const Vector>& z,
                    Eigen::Ref<Vector> out) const override {
        if (!has_gradient()) throw InvalidArgument("GpConstraintModel: built without gradient data");
        const Index r = rem_map_.cols();
        Vector w = ref_sphere_ * (rho * v.head(k_act_));
        if (r > 0) w.noalias() += ref_rem_ * z.head(r);
        if (ref_->nugget() > 0.0) w += projected_nugget(z.tail(ref_->grid_size()));
        for (int q = 0; q < 3; ++q) {
            const auto qi = static_cast<std::size_t>(q);
            out(q) = -(dshift_[qi](j) + dT_[qi].row(j).dot(w));
        }
    }

private:
    static bool is_reference(const KernelParams& u, const GpProblem& p) { return u == p.u0; }

    static MappedPosterior mapped(const KernelParams& u, const GpProblem& p, const GpReference& ref) {
        if (is_reference(u, p)) return {ref.field->mean(), Matrix(), ref.nugget};
        return map_posterior(u, p, ref);
    }

    GpConstraintModel(const GpProblem& p, const GpReference& ref, const KernelParams& u, Index K, bool with_gradient,
                      MappedPosterior m)
        : FieldBoundModel(ref.field, K, std::move(m.shift), std::move(m.transform), ref.lower, std::nullopt), u_(u) {
        if (!with_gradient) return;
        const SpectralField split = ref_->with_split(k_act_);
        ref_sphere_ = split.sphere_block();
        ref_rem_ = split.remainder_block();
        for (int q = 0; q < 3; ++q) {
            const MappedPosterior plus = map_posterior(u.shifted(q, kFdStep), p, ref);
            const MappedPosterior minus = map_posterior(u.shifted(q, -kFdStep), p, ref);
            dshift_.push_back((plus.shift - minus.shift) / (2.0 * kFdStep));
            dT_.push_back((plus.transform - minus.transform) / (2.0 * kFdStep));
        }
    }

    KernelParams u_;
    Matrix ref_sphere_;
    Matrix ref_rem_;
    std::vector<Vector> dshift_;
    std::vector<Matrix> dT_;
};

}  // namespace hisrd::gp
