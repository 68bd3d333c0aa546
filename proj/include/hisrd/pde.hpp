#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <cmath>
#include <memory>
#include <mutex>
#include <numbers>
#include <vector>

#include "hisrd/bound_model.hpp"
#include "hisrd/errors.hpp"
#include "hisrd/estimator.hpp"
#include "hisrd/field.hpp"

namespace hisrd::pde {

/// -Δy = f + u on the unit square, y = 0 on the top, bottom and right edges,
/// ∇y·n = ξ on the left edge {0}×(0,1), with ξ a Gaussian field of covariance
/// γ(-∂²)⁻¹ (Dirichlet endpoints). Unknowns are the n_grid × n_grid interior
/// nodes x = (i h, j h), h = 1/(n_grid+1); node (i, j) is stored at
/// (i-1) + n_grid (j-1), so a reshaped n×n matrix has x1 along rows.
struct PdeProblem {
    Index n_grid = 64;
    double gamma = 4.0;
    double lower = -0.3;
    double upper = 0.3;
    Vector control;  // u on the nodes
    Vector source;   // f on the nodes
    double alpha_reg = 1e-5;
    Vector target;   // y_d on the nodes

    [[nodiscard]] double h() const { return 1.0 / static_cast<double>(n_grid + 1); }
    [[nodiscard]] Index node_count() const { return n_grid * n_grid; }
    [[nodiscard]] Index index(Index i, Index j) const { return (i - 1) + n_grid * (j - 1); }

    /// Nodal values of f(x1, x2).
    template <class F>
    [[nodiscard]] Vector nodal(F&& f) const {
        Vector v(node_count());
        for (Index j = 1; j <= n_grid; ++j)
            for (Index i = 1; i <= n_grid; ++i) v(index(i, j)) = f(i * h(), j * h());
        return v;
    }

    /// u = sin(2πx1)cos(πx2)/5, f = 0, y_d = cos(2πx1)sin(2πx2)/10.
    [[nodiscard]] static PdeProblem nominal(Index n = 64) {
        HISRD_REQUIRE(n >= 8, "PdeProblem: n_grid must be >= 8");
        PdeProblem p;
        p.n_grid = n;
        const double pi = std::numbers::pi;
        p.control = p.nodal([pi](double x1, double x2) { return 0.2 * std::sin(2 * pi * x1) * std::cos(pi * x2); });
        p.source = Vector::Zero(p.node_count());
        p.target = p.nodal([pi](double x1, double x2) { return 0.1 * std::cos(2 * pi * x1) * std::sin(2 * pi * x2); });
        return p;
    }

    void validate() const {
        HISRD_REQUIRE(n_grid >= 8, "PdeProblem: n_grid must be >= 8");
        HISRD_REQUIRE(gamma > 0.0, "PdeProblem: gamma must be positive");
        HISRD_REQUIRE(lower < upper, "PdeProblem: need lower < upper");
        HISRD_REQUIRE(control.size() == node_count() && source.size() == node_count(),
                      "PdeProblem: control/source must live on the n_grid² nodes");
    }
};

/// Five-point finite differences. The Neumann edge uses the first-order
/// one-sided ghost value y_0 = y_1 + h ξ, which turns the node-1 row into
/// 3/h² on the diagonal and adds ξ/h to its right-hand side. The resulting
/// matrix is symmetric positive definite and factored once.
class PoissonSolver {
public:
    explicit PoissonSolver(Index n) : n_(n), h_(1.0 / static_cast<double>(n + 1)) {
        HISRD_REQUIRE(n >= 2, "PoissonSolver: need at least 2 nodes per side");
        const Index N = n * n;
        const double s = 1.0 / (h_ * h_);
        std::vector<Eigen::Triplet<double>> t;
        t.reserve(static_cast<std::size_t>(5 * N));
        for (Index j = 1; j <= n; ++j) {
            for (Index i = 1; i <= n; ++i) {
                const Index r = idx(i, j);
                t.emplace_back(r, r, (i == 1 ? 3.0 : 4.0) * s);
                if (i > 1) t.emplace_back(r, idx(i - 1, j), -s);
                if (i < n) t.emplace_back(r, idx(i + 1, j), -s);
                if (j > 1) t.emplace_back(r, idx(i, j - 1), -s);
                if (j < n) t.emplace_back(r, idx(i, j + 1), -s);
            }
        }
        A_.resize(N, N);
        A_.setFromTriplets(t.begin(), t.end());
        llt_.compute(A_);
        if (llt_.info() != Eigen::Success) throw NumericalError("SingularSystem", "Poisson matrix factorization failed");
    }

    [[nodiscard]] Index n_grid() const noexcept { return n_; }
    [[nodiscard]] double h() const noexcept { return h_; }
    [[nodiscard]] const Eigen::SparseMatrix<double>& matrix() const noexcept { return A_; }

    /// State for nodal right-hand side f + u and Neumann data ξ on the left
    /// edge nodes (length n_grid, ordered by x2).
    [[nodiscard]] Vector solve(const Vector& rhs, const Vector& neumann) const {
        HISRD_REQUIRE(rhs.size() == n_ * n_, "PoissonSolver::solve: rhs has wrong length");
        HISRD_REQUIRE(neumann.size() == n_, "PoissonSolver::solve: Neumann data has wrong length");
        Vector b = rhs;
        for (Index j = 1; j <= n_; ++j) b(idx(1, j)) += neumann(j - 1) / h_;
        return llt_.solve(b);
    }

    /// Solves Aᵀ p = c, the discrete adjoint of solve(·, 0).
    [[nodiscard]] Vector solve_adjoint(const Vector& c) const {
        HISRD_REQUIRE(c.size() == n_ * n_, "PoissonSolver::solve_adjoint: wrong length");
        // A is symmetric, so the transposed system shares the factorization.
        return llt_.solve(c);
    }

    /// Multi-column solve with zero Neumann data.
    [[nodiscard]] Matrix solve_columns(const Matrix& rhs) const { return llt_.solve(rhs); }

    /// Neumann data as an interior right-hand side (column j ↦ node (1, j)).
    [[nodiscard]] Matrix neumann_to_rhs(const Matrix& xi) const {
        Matrix b = Matrix::Zero(n_ * n_, xi.cols());
        for (Index j = 1; j <= n_; ++j) b.row(idx(1, j)) = xi.row(j - 1) / h_;
        return b;
    }

private:
    [[nodiscard]] Index idx(Index i, Index j) const { return (i - 1) + n_ * (j - 1); }

    Index n_;
    double h_;
    Eigen::SparseMatrix<double> A_;
    Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt_;
};

/// Boundary field on the left-edge nodes x2 = j h. Modes are the Euclidean-
/// normalized √(2h) sin(kπx2); scales √γ / (kπ √h) reproduce at the nodes the
/// L2 expansion Σ √γ/(kπ) g_k √2 sin(kπx2).
[[nodiscard]] inline SpectralField boundary_field(const PdeProblem& p) {
    const Index n = p.n_grid;
    const double h = p.h();
    Matrix modes(n, n);
    Vector scales(n);
    for (Index k = 1; k <= n; ++k) {
        for (Index j = 1; j <= n; ++j) {
            modes(j - 1, k - 1) = std::sqrt(2.0 * h) * std::sin(static_cast<double>(k * j) * std::numbers::pi * h);
        }
        scales(k - 1) = std::sqrt(p.gamma) / (static_cast<double>(k) * std::numbers::pi * std::sqrt(h));
    }
    return SpectralField(Vector::Zero(n), modes, scales, 0);
}

/// State-space KL: mean = solve(f + u, 0); each scaled boundary mode is
/// propagated through the solver and the result is re-orthonormalized by a
/// thin QR followed by an SVD of R, which keeps the covariance unchanged.
[[nodiscard]] inline SpectralField build_state_kl(const PdeProblem& p, const PoissonSolver& solver, Index K = 0) {
    p.validate();
    const SpectralField bf = boundary_field(p);
    const Vector mean = solver.solve(p.source + p.control, Vector::Zero(p.n_grid));
    const Matrix prop = solver.solve_columns(solver.neumann_to_rhs(bf.modes() * bf.scales().asDiagonal()));
    Eigen::HouseholderQR<Matrix> qr(prop);
    const Index m = prop.cols();
    const Matrix Q = qr.householderQ() * Matrix::Identity(prop.rows(), m);
    const Matrix R = qr.matrixQR().topRows(m).triangularView<Eigen::Upper>();
    Eigen::JacobiSVD<Matrix> svd(R, Eigen::ComputeFullU);
    const Vector& sv = svd.singularValues();
    Index rank = 0;
    while (rank < m && sv(rank) > 1e-14 * sv(0)) ++rank;
    Matrix modes = Q * svd.matrixU().leftCols(rank);
    for (Index k = 0; k < rank; ++k) {
        for (Index i = 0; i < modes.rows(); ++i) {
            if (modes(i, k) != 0.0) {
                if (modes(i, k) < 0.0) modes.col(k) *= -1.0;
                break;
            }
        }
    }
    return SpectralField(mean, modes, sv.head(rank), std::min(K, rank));
}

/// Joint state bounds lower ≤ y(x_m) ≤ upper on all nodes (M = 2 n_grid²).
/// ∇_u g_j = ±A⁻ᵀ e_m does not depend on the ray position, so gradients are
/// combined into a single adjoint solve.
class PdeConstraintModel : public FieldBoundModel {
public:
    PdeConstraintModel(const PdeProblem& p, std::shared_ptr<const PoissonSolver> solver,
                       std::shared_ptr<const SpectralField> state_kl, Index K)
        : FieldBoundModel(state_kl, K, state_kl->mean(), Matrix(), Vector::Constant(p.node_count(), p.lower),
                          Vector::Constant(p.node_count(), p.upper)),
          solver_(std::move(solver)) {
        HISRD_REQUIRE(K <= state_kl->full_rank(), "PdeConstraintModel: K exceeds the state KL rank");
        rows_.resize(static_cast<std::size_t>(p.node_count()));
        once_ = std::make_unique<std::once_flag[]>(static_cast<std::size_t>(p.node_count()));
    }

    [[nodiscard]] Index control_dim() const override { return output_size(); }
    [[nodiscard]] bool separable_gradient() const override { return true; }

    /// Row m of the control-to-state map, cached on first use.
    [[nodiscard]] const Vector& adjoint_row(Index m) const {
        const auto k = static_cast<std::size_t>(m);
        std::call_once(once_[k], [&] { rows_[k] = solver_->solve_adjoint(Vector::Unit(output_size(), m)); });
        return rows_[k];
    }

    void eval_grads(Index j, double, const Eigen::Ref<const Vector>&, const Eigen::Ref<const Vector>&,
                    Eigen::Ref<Vector> out) const override {
        const auto [m, sign] = constraint_site(j);
        out = sign * adjoint_row(m);
    }

    [[nodiscard]] Vector combine_gradients(const Vector& weights) const override {
        const Index n = output_size();
        const Vector c = weights.tail(n) - weights.head(n);
        return solver_->solve_adjoint(c);
    }

private:
    std::shared_ptr<const PoissonSolver> solver_;
    mutable std::vector<Vector> rows_;
    std::unique_ptr<std::once_flag[]> once_;
};

/// Everything needed to evaluate the chance constraint at one control.
struct PdeSetup {
    PdeProblem problem;
    std::shared_ptr<const PoissonSolver> solver;
    std::shared_ptr<const SpectralField> state_kl;

    explicit PdeSetup(PdeProblem p)
        : problem(std::move(p)), solver(std::make_shared<const PoissonSolver>(problem.n_grid)),
          state_kl(std::make_shared<const SpectralField>(build_state_kl(problem, *solver))) {}

    [[nodiscard]] PdeConstraintModel model(Index K) const { return PdeConstraintModel(problem, solver, state_kl, K); }

    /// Same problem at another control; reuses the factorization and modes.
    [[nodiscard]] PdeSetup with_control(const Vector& u) const {
        PdeSetup s = *this;
        s.problem.control = u;
        const Vector mean = solver->solve(problem.source + u, Vector::Zero(problem.n_grid));
        s.state_kl = std::make_shared<const SpectralField>(mean, state_kl->modes(), state_kl->scales(), 0);
        return s;
    }
};

/// hiSRD probability of the joint state bounds and its gradient with respect
/// to the nodal control values.
[[nodiscard]] inline EstimateReport probability_and_gradient(const PdeSetup& setup, Index K, Index N,
                                                             const SamplerSpec& spec, const EstimatorOptions& opt = {}) {
    const PdeConstraintModel model = setup.model(K);
    return gradient_hisrd(model, N, spec, opt);
}

/// Nodal vector as an n × n grid (rows: x1 index, columns: x2 index).
[[nodiscard]] inline Matrix as_grid(const Vector& v, Index n) { return Eigen::Map<const Matrix>(v.data(), n, n); }

/// Risk-neutral tracking objective ½ E‖y - y_d‖² h² + (α/2)‖u‖² h², evaluated
/// in closed form from the state KL.
[[nodiscard]] inline double objective(const PdeSetup& s) {
    const double h2 = s.problem.h() * s.problem.h();
    const Vector d = s.state_kl->mean() - s.problem.target;
    const double var = s.state_kl->scales().squaredNorm();
    return 0.5 * (d.squaredNorm() + var) * h2 + 0.5 * s.problem.alpha_reg * s.problem.control.squaredNorm() * h2;
}

}  // namespace hisrd::pde
