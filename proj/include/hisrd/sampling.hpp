#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>

#include "hisrd/errors.hpp"
#include "hisrd/specfun.hpp"

namespace hisrd {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class SampleKind { mc, qmc };

inline constexpr Index kMaxHaltonDim = 64;

namespace detail {

inline constexpr std::array<int, kMaxHaltonDim> kPrimes = {
    2,   3,   5,   7,   11,  13,  17,  19,  23,  29,  31,  37,  41,  43,  47,  53,
    59,  61,  67,  71,  73,  79,  83,  89,  97,  101, 103, 107, 109, 113, 127, 131,
    137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191, 193, 197, 199, 211, 223,
    227, 229, 233, 239, 241, 251, 257, 263, 269, 271, 277, 281, 283, 293, 307, 311};

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// splitmix64 stepping; the per-sample state is a hash of (seed, index) so any
// sample can be regenerated without replaying its predecessors.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t index)
        : state_(mix64(mix64(seed + kGolden) ^ mix64(index * kGolden + 0x632BE59BD9B4E019ULL))) {}

    std::uint64_t next_u64() {
        state_ += kGolden;
        return mix64(state_);
    }

    // Uniform on the open interval (0, 1).
    double next_uniform() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

    void fill_normals(double* out, Index n) {
        Index i = 0;
        for (; i + 1 < n; i += 2) {
            const double r = std::sqrt(-2.0 * std::log(next_uniform()));
            const double t = 2.0 * std::numbers::pi * next_uniform();
            out[i] = r * std::cos(t);
            out[i + 1] = r * std::sin(t);
        }
        if (i < n) {
            const double r = std::sqrt(-2.0 * std::log(next_uniform()));
            out[i] = r * std::cos(2.0 * std::numbers::pi * next_uniform());
        }
    }

private:
    std::uint64_t state_;
};

inline double radical_inverse(std::uint64_t i, int base) {
    const double inv = 1.0 / base;
    double f = inv;
    double r = 0.0;
    while (i > 0) {
        r += f * static_cast<double>(i % base);
        i /= base;
        f *= inv;
    }
    return r;
}

}  // namespace detail

/// Deterministically derive an independent seed for a named sub-stream.
[[nodiscard]] inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
    return detail::mix64(seed ^ detail::mix64(tag + 0xD1B54A32D192ED03ULL));
}

/// Halton point with index `i` (i ≥ 1), coordinate `d` < 64.
[[nodiscard]] inline double halton(std::uint64_t i, Index d) {
    return detail::radical_inverse(i, detail::kPrimes[static_cast<std::size_t>(d)]);
}

/// A replayable stream of Gaussian vectors. MC points come from a counter-based
/// generator keyed by (seed, index); QMC points are Halton points mapped through
/// normal_inv_cdf, starting at index 1.
class SampleStream {
public:
    SampleStream(SampleKind kind, Index dimension, std::uint64_t seed,
                 std::optional<std::uint64_t> index = std::nullopt)
        : kind_(kind), dim_(dimension), seed_(seed), index_(index.value_or(kind == SampleKind::qmc ? 1 : 0)) {
        HISRD_REQUIRE(dimension >= 1, "SampleStream: dimension must be >= 1");
        if (kind == SampleKind::qmc && dimension > kMaxHaltonDim) {
            throw InvalidArgument("SampleStream: Halton streams support at most 64 dimensions");
        }
        if (kind == SampleKind::qmc && index_ == 0) {
            throw InvalidArgument("SampleStream: Halton index must start at 1");
        }
    }

    [[nodiscard]] SampleKind kind() const noexcept { return kind_; }
    [[nodiscard]] Index dimension() const noexcept { return dim_; }
    [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }
    [[nodiscard]] std::uint64_t index() const noexcept { return index_; }

    /// Copy of this stream positioned at another index.
    [[nodiscard]] SampleStream at(std::uint64_t index) const { return SampleStream(kind_, dim_, seed_, index); }

    void skip(std::uint64_t count) { index_ += count; }

    /// Writes point `index` into `out` (length dimension()).
    void point(std::uint64_t index, double* out) const {
        if (kind_ == SampleKind::mc) {
            detail::CounterRng(seed_, index).fill_normals(out, dim_);
        } else {
            for (Index d = 0; d < dim_; ++d) out[d] = specfun::normal_inv_cdf(halton(index, d));
        }
    }

    /// Fills the columns of `out` (dimension × count) and advances by count.
    void fill_columns(Eigen::Ref<Matrix> out) {
        HISRD_REQUIRE(out.rows() == dim_, "SampleStream::fill_columns: row count must equal dimension");
        for (Index c = 0; c < out.cols(); ++c) point(index_ + static_cast<std::uint64_t>(c), out.col(c).data());
        index_ += static_cast<std::uint64_t>(out.cols());
    }

    /// count × dimension block of N(0,1) variates; one row per point.
    [[nodiscard]] Matrix next_gaussian_block(Index count) {
        HISRD_REQUIRE(count >= 1, "next_gaussian_block: count must be >= 1");
        Matrix cols(dim_, count);
        fill_columns(cols);
        return cols.transpose();
    }

private:
    SampleKind kind_;
    Index dim_;
    std::uint64_t seed_;
    std::uint64_t index_;
};

/// How an estimator draws its joint (sphere, remainder) Gaussian vectors.
/// With QMC, the leading 64 coordinates are Halton and any further
/// coordinates are filled from an MC stream keyed by a derived seed.
struct SamplerSpec {
    SampleKind kind = SampleKind::mc;
    std::uint64_t seed = 0;
    std::uint64_t first_index = 0;  // offset into the sample sequence (0-based)
};

/// Fills columns of `out` with points first_index + offset ... of the joint
/// Gaussian sequence described by `spec` (dimension = out.rows()).
inline void fill_joint_gaussian(const SamplerSpec& spec, std::uint64_t offset, Eigen::Ref<Matrix> out) {
    const Index dim = out.rows();
    if (dim == 0) return;
    const std::uint64_t start = spec.first_index + offset;
    if (spec.kind == SampleKind::mc) {
        SampleStream s(SampleKind::mc, dim, spec.seed, start);
        s.fill_columns(out);
        return;
    }
    const Index qdim = std::min(dim, kMaxHaltonDim);
    SampleStream q(SampleKind::qmc, qdim, spec.seed, start + 1);
    q.fill_columns(out.topRows(qdim));
    if (dim > qdim) {
        SampleStream m(SampleKind::mc, dim - qdim, derive_seed(spec.seed, 0x51A7), start);
        m.fill_columns(out.bottomRows(dim - qdim));
    }
}

/// Normalizes each column to unit length. An all-zero column becomes e_1;
/// returns the number of such replacements.
inline Index normalize_columns(Eigen::Ref<Matrix> g) {
    Index zero = 0;
    for (Index c = 0; c < g.cols(); ++c) {
        const double n = g.col(c).norm();
        if (n > 0.0) {
            g.col(c) /= n;
        } else {
            g.col(c).setZero();
            g(0, c) = 1.0;
            ++zero;
        }
    }
    return zero;
}

/// Row-wise projection onto the unit sphere (rows are samples).
[[nodiscard]] inline Matrix to_sphere(const Matrix& g, Index* zero_rows = nullptr) {
    HISRD_REQUIRE(g.cols() >= 1, "to_sphere: dimension must be >= 1");
    Matrix t = g.transpose();
    const Index z = normalize_columns(t);
    if (zero_rows) *zero_rows += z;
    return t.transpose();
}

/// τ = S_r / (S_r + S_{K-r}) with S_d a sum of d squared normals; the stream
/// must have dimension K. Returns ones when r == K.
[[nodiscard]] inline Vector sample_beta_tau(Index r, Index K, Index count, SampleStream& s) {
    HISRD_REQUIRE(r >= 1 && r <= K, "sample_beta_tau: need 1 <= r <= K");
    HISRD_REQUIRE(count >= 1, "sample_beta_tau: count must be >= 1");
    if (r == K) return Vector::Ones(count);
    HISRD_REQUIRE(s.dimension() == K, "sample_beta_tau: stream dimension must equal K");
    Vector tau(count);
    Vector g(K);
    for (Index i = 0; i < count; ++i) {
        s.point(s.index(), g.data());
        s.skip(1);
        const double sr = g.head(r).squaredNorm();
        const double rest = g.tail(K - r).squaredNorm();
        tau(i) = sr / (sr + rest);
    }
    return tau;
}

}  // namespace hisrd
