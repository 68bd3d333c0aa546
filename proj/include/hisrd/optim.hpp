#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "hisrd/errors.hpp"
#include "hisrd/sampling.hpp"

namespace hisrd::optim {

/// Value of a smooth function; fills grad when it is non-null.
using Objective = std::function<double(const Vector& x, Vector* grad)>;

/// Constraint values c(x) ≥ 0; fills the Jacobian (rows = constraints) when non-null.
using Constraints = std::function<Vector(const Vector& x, Matrix* jac)>;

enum class Status { converged, max_iterations, line_search_failed };

[[nodiscard]] inline const char* status_name(Status s) {
    switch (s) {
        case Status::converged: return "converged";
        case Status::max_iterations: return "max_iterations";
        case Status::line_search_failed: return "line_search_failed";
    }
    return "?";
}

struct BfgsOptions {
    int max_iter = 200;
    double gtol = 1e-6;
    double ftol = 1e-12;
    double max_step = 1.0;  // cap on ‖x_{k+1} - x_k‖∞
    double armijo = 1e-4;
    int max_backtracks = 40;
};

struct BfgsResult {
    Vector x;
    double f = 0.0;
    Vector grad;
    int iterations = 0;
    Status status = Status::max_iterations;
};

/// Quasi-Newton minimization with an inverse-Hessian BFGS update and
/// Armijo backtracking. on_step(iter, x, f) runs after each accepted step.
inline BfgsResult bfgs_minimize(const Objective& f, Vector x, const BfgsOptions& opt = {},
                                const std::function<void(int, const Vector&, double)>& on_step = {}) {
    const Index d = x.size();
    Vector g(d);
    double fx = f(x, &g);
    if (!std::isfinite(fx)) throw NumericalError("NonFiniteObjective", "bfgs_minimize: objective not finite at the start point");
    Matrix H = Matrix::Identity(d, d);
    BfgsResult res;
    for (int it = 0; it < opt.max_iter; ++it) {
        if (g.lpNorm<Eigen::Infinity>() <= opt.gtol) {
            res.status = Status::converged;
            break;
        }
        Vector p = -H * g;
        if (g.dot(p) >= 0.0) {
            H.setIdentity();
            p = -g;
        }
        const double pmax = p.lpNorm<Eigen::Infinity>();
        if (pmax > opt.max_step) p *= opt.max_step / pmax;
        const double slope = g.dot(p);

        double t = 1.0;
        Vector xn(d);
        double fn = 0.0;
        bool accepted = false;
        for (int b = 0; b < opt.max_backtracks; ++b) {
            xn = x + t * p;
            fn = f(xn, nullptr);
            if (std::isfinite(fn) && fn <= fx + opt.armijo * t * slope) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) {
            res.status = Status::line_search_failed;
            break;
        }
        Vector gn(d);
        fn = f(xn, &gn);
        const Vector s = xn - x;
        const Vector y = gn - g;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            if (it == 0) H *= sy / y.squaredNorm();
            const double r = 1.0 / sy;
            const Matrix V = Matrix::Identity(d, d) - r * y * s.transpose();
            H = (V.transpose() * H * V + r * s * s.transpose()).eval();
        }
        const double df = fx - fn;
        x = xn;
        g = gn;
        fx = fn;
        res.iterations = it + 1;
        if (on_step) on_step(it + 1, x, fx);
        if (df <= opt.ftol * std::max(1.0, std::abs(fx))) {
            res.status = Status::converged;
            break;
        }
    }
    res.x = std::move(x);
    res.f = fx;
    res.grad = std::move(g);
    return res;
}

struct AugLagOptions {
    int max_outer = 12;
    double mu0 = 10.0;
    double mu_growth = 10.0;
    double mu_max = 1e8;
    double feas_tol = 1e-4;
    double compl_tol = 1e-4;
    BfgsOptions inner{};
};

struct AugLagStep {
    int outer = 0;
    int inner = 0;
    Vector x;
    double f = 0.0;
    double lagrangian = 0.0;
};

struct AugLagResult {
    Vector x;
    double f = 0.0;
    Vector c;
    Vector lambda;
    int outer_iterations = 0;
    Status status = Status::max_iterations;
    std::vector<AugLagStep> trace;
};

/// Powell-Hestenes-Rockafellar augmented Lagrangian for min f(x) s.t. c(x) ≥ 0,
///
///     L(x) = f(x) + (1/2μ) Σ_i [max(0, λ_i - μ c_i(x))² - λ_i²],
///
/// minimized by BFGS in each outer loop. before_outer(k) runs first in every
/// outer loop; callers use it to refresh sampled quantities so f and c stay
/// fixed deterministic functions within the loop.
inline AugLagResult augmented_lagrangian(const Objective& f, const Constraints& c, Vector x,
                                         const AugLagOptions& opt = {},
                                         const std::function<void(int)>& before_outer = {}) {
    AugLagResult res;
    Vector lambda;
    double mu = opt.mu0;
    double prev_viol = std::numeric_limits<double>::infinity();
    for (int k = 0; k < opt.max_outer; ++k) {
        if (before_outer) before_outer(k);
        if (lambda.size() == 0) lambda = Vector::Zero(c(x, nullptr).size());

        const Objective lag = [&](const Vector& xx, Vector* grad) {
            Matrix jac;
            Vector gf;
            const double fv = f(xx, grad ? &gf : nullptr);
            const Vector cv = c(xx, grad ? &jac : nullptr);
            const Vector shifted = (lambda - mu * cv).cwiseMax(0.0);
            const double pen = (shifted.squaredNorm() - lambda.squaredNorm()) / (2.0 * mu);
            if (grad) *grad = gf - jac.transpose() * shifted;
            return fv + pen;
        };
        const BfgsResult inner = bfgs_minimize(lag, x, opt.inner, [&](int i, const Vector& xi, double li) {
            res.trace.push_back({k, i, xi, f(xi, nullptr), li});
        });
        x = inner.x;
        const Vector cv = c(x, nullptr);
        lambda = (lambda - mu * cv).cwiseMax(0.0);
        const double viol = (-cv).cwiseMax(0.0).maxCoeff();
        const double compl_gap = lambda.cwiseProduct(cv).cwiseAbs().maxCoeff();
        res.outer_iterations = k + 1;
        if (viol <= opt.feas_tol && compl_gap <= opt.compl_tol && inner.status == Status::converged) {
            res.status = Status::converged;
            break;
        }
        if (viol > 0.25 * prev_viol) mu = std::min(mu * opt.mu_growth, opt.mu_max);
        prev_viol = viol;
    }
    res.x = x;
    res.f = f(x, nullptr);
    res.c = c(x, nullptr);
    res.lambda = std::move(lambda);
    return res;
}

/// Central-difference gradient of a scalar function.
[[nodiscard]] inline Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& x,
                                        double h) {
    Vector g(x.size());
    for (Index i = 0; i < x.size(); ++i) {
        Vector xp = x, xm = x;
        xp(i) += h;
        xm(i) -= h;
        g(i) = (f(xp) - f(xm)) / (2.0 * h);
    }
    return g;
}

/// Central-difference Jacobian of a vector function (rows = outputs).
[[nodiscard]] inline Matrix fd_jacobian(const std::function<Vector(const Vector&)>& f, const Vector& x,
                                        double h) {
    Matrix jac;
    for (Index i = 0; i < x.size(); ++i) {
        Vector xp = x, xm = x;
        xp(i) += h;
        xm(i) -= h;
        const Vector d = (f(xp) - f(xm)) / (2.0 * h);
        if (i == 0) jac.resize(d.size(), x.size());
        jac.col(i) = d;
    }
    return jac;
}

}  // namespace hisrd::optim
