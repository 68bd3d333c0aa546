#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include "hisrd/errors.hpp"
#include "hisrd/sampling.hpp"

namespace hisrd {

/// Dense symmetric matrix. Construction checks the asymmetry against 1e-12
/// relative to the largest entry and then stores the exactly symmetrized copy.
class SymMatrix {
public:
    SymMatrix() = default;

    explicit SymMatrix(Matrix m) : m_(std::move(m)) {
        HISRD_REQUIRE(m_.rows() == m_.cols(), "SymMatrix: matrix must be square");
        if (m_.size() == 0) return;
        const double scale = std::max(m_.cwiseAbs().maxCoeff(), 1e-300);
        const double asym = (m_ - m_.transpose()).cwiseAbs().maxCoeff();
        if (!(asym <= 1e-12 * scale)) {
            std::ostringstream os;
            os << "SymMatrix: asymmetry " << asym << " exceeds 1e-12 relative";
            throw InvalidArgument(os.str());
        }
        m_ = 0.5 * (m_ + m_.transpose()).eval();
    }

    [[nodiscard]] Index order() const noexcept { return m_.rows(); }
    [[nodiscard]] const Matrix& matrix() const noexcept { return m_; }
    [[nodiscard]] double operator()(Index i, Index j) const { return m_(i, j); }
    [[nodiscard]] double max_abs() const { return m_.size() ? m_.cwiseAbs().maxCoeff() : 0.0; }

private:
    Matrix m_;
};

/// 1e-10 · trace(m) / n.
[[nodiscard]] inline double default_jitter(const SymMatrix& m) {
    if (m.order() == 0) return 0.0;
    return 1e-10 * std::max(m.matrix().trace(), 0.0) / static_cast<double>(m.order());
}

struct CholeskyFactor {
    Matrix lower;        // S with S·Sᵀ = m + jitter·I
    double jitter = 0.0;  // jitter that was actually applied
};

/// Cholesky with the jitter ladder (jitter, 10·jitter, 100·jitter).
[[nodiscard]] inline CholeskyFactor cholesky(const SymMatrix& m, double jitter) {
    HISRD_REQUIRE(jitter >= 0.0, "cholesky: jitter must be nonnegative");
    const Index n = m.order();
    for (double j : {jitter, 10.0 * jitter, 100.0 * jitter}) {
        Matrix a = m.matrix();
        a.diagonal().array() += j;
        Eigen::LLT<Matrix> llt(a);
        if (llt.info() == Eigen::Success) {
            Matrix l = llt.matrixL();
            if ((l.diagonal().array() > 0.0).all()) return {std::move(l), j};
        }
        if (jitter == 0.0) break;
    }
    std::ostringstream os;
    os << "cholesky: order " << n << " matrix not positive definite with jitter up to " << 100.0 * jitter;
    throw NotPositiveDefinite(os.str());
}

[[nodiscard]] inline CholeskyFactor cholesky(const SymMatrix& m) { return cholesky(m, default_jitter(m)); }

struct EigenDecomposition {
    Vector values;          // descending, clamped at 0
    Matrix vectors;         // orthonormal columns
    Index clamped = 0;      // small negative eigenvalues set to 0
    Index significant_negative = 0;  // eigenvalues below -1e-10·‖m‖ (also clamped)
};

/// Symmetric eigendecomposition, eigenvalues descending, each eigenvector
/// signed so its first nonzero component is positive.
[[nodiscard]] inline EigenDecomposition sym_eigh(const SymMatrix& m) {
    const Index n = m.order();
    EigenDecomposition out;
    if (n == 0) return out;
    Eigen::SelfAdjointEigenSolver<Matrix> es(m.matrix());
    if (es.info() != Eigen::Success) {
        throw ConvergenceFailure("sym_eigh: QR iteration did not converge", 30 * static_cast<long>(n));
    }
    const Vector& ev = es.eigenvalues();
    const Matrix& V = es.eigenvectors();
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return ev(a) > ev(b); });

    const double norm = std::max(std::fabs(ev.maxCoeff()), std::fabs(ev.minCoeff()));
    out.values.resize(n);
    out.vectors.resize(n, n);
    for (Index k = 0; k < n; ++k) {
        const Index src = order[static_cast<std::size_t>(k)];
        double lam = ev(src);
        if (lam < 0.0) {
            if (lam < -1e-10 * norm) ++out.significant_negative;
            ++out.clamped;
            lam = 0.0;
        }
        out.values(k) = lam;
        auto col = out.vectors.col(k);
        col = V.col(src);
        for (Index i = 0; i < n; ++i) {
            if (col(i) != 0.0) {
                if (col(i) < 0.0) col = -col;
                break;
            }
        }
    }
    return out;
}

enum class Transpose { no, yes };

/// Solves S·X = B (or Sᵀ·X = B) for lower-triangular S.
[[nodiscard]] inline Matrix tri_solve(const Matrix& S, const Matrix& B, Transpose t = Transpose::no) {
    HISRD_REQUIRE(S.rows() == S.cols(), "tri_solve: S must be square");
    HISRD_REQUIRE(S.rows() == B.rows(), "tri_solve: dimension mismatch");
    for (Index i = 0; i < S.rows(); ++i) {
        if (!(S(i, i) != 0.0)) {
            throw SingularTriangular("tri_solve: zero diagonal entry at row " + std::to_string(i));
        }
    }
    if (t == Transpose::no) return S.triangularView<Eigen::Lower>().solve(B);
    return S.triangularView<Eigen::Lower>().transpose().solve(B);
}

}  // namespace hisrd
