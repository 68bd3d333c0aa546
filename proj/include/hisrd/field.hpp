#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include "hisrd/errors.hpp"
#include "hisrd/linalg.hpp"
#include "hisrd/sampling.hpp"

namespace hisrd {

/// Rule for choosing split_K in from_covariance.
struct TruncationRule {
    enum class Kind { explicit_split, energy_fraction };
    Kind kind = Kind::explicit_split;
    Index split = 0;
    double fraction = 1.0;

    static TruncationRule explicit_k(Index k) { return {Kind::explicit_split, k, 1.0}; }
    static TruncationRule energy(double f) { return {Kind::energy_fraction, 0, f}; }
};

/// Discretized Gaussian field ξ = mean + Σ_k scales_k g_k modes[:,k] + ξ_nug,
/// split into the leading split_K modes (the SRD subspace) and the rest.
///
/// `nugget` optionally adds independent variance on the orthogonal complement
/// of the modes, ξ_nug = √nugget (I - Φ Φᵀ) h with h ~ N(0, I_n). It keeps a
/// field full rank without storing n modes; it always belongs to the remainder.
class SpectralField {
public:
    SpectralField() = default;

    SpectralField(Vector mean, Matrix modes, Vector scales, Index split_K, double nugget = 0.0)
        : mean_(std::move(mean)), modes_(std::move(modes)), scales_(std::move(scales)), split_(split_K),
          nugget_(nugget) {
        const Index n = mean_.size();
        HISRD_REQUIRE(modes_.rows() == n || modes_.cols() == 0, "SpectralField: modes must have n rows");
        if (modes_.cols() == 0) modes_.resize(n, 0);
        HISRD_REQUIRE(scales_.size() == modes_.cols(), "SpectralField: one scale per mode");
        HISRD_REQUIRE(split_ >= 0 && split_ <= modes_.cols(), "SpectralField: split_K must lie in [0, K_full]");
        HISRD_REQUIRE(nugget_ >= 0.0, "SpectralField: nugget must be nonnegative");
        for (Index k = 0; k < scales_.size(); ++k) {
            HISRD_REQUIRE(scales_(k) >= 0.0, "SpectralField: scales must be nonnegative");
            HISRD_REQUIRE(k == 0 || scales_(k) <= scales_(k - 1), "SpectralField: scales must be descending");
        }
        if (modes_.cols() > 0) {
            const double err =
                (modes_.transpose() * modes_ - Matrix::Identity(modes_.cols(), modes_.cols())).cwiseAbs().maxCoeff();
            HISRD_REQUIRE(err <= 1e-8, "SpectralField: modes are not orthonormal");
        }
    }

    [[nodiscard]] Index grid_size() const noexcept { return mean_.size(); }
    [[nodiscard]] Index full_rank() const noexcept { return modes_.cols(); }
    [[nodiscard]] Index split() const noexcept { return split_; }
    [[nodiscard]] double nugget() const noexcept { return nugget_; }
    [[nodiscard]] const Vector& mean() const noexcept { return mean_; }
    [[nodiscard]] const Matrix& modes() const noexcept { return modes_; }
    [[nodiscard]] const Vector& scales() const noexcept { return scales_; }

    [[nodiscard]] SpectralField with_split(Index k) const {
        SpectralField f = *this;
        HISRD_REQUIRE(k >= 0 && k <= full_rank(), "with_split: split_K must lie in [0, K_full]");
        f.split_ = k;
        return f;
    }

    /// L_K as an n × split_K matrix (column k = scales_k · modes[:,k]).
    [[nodiscard]] Matrix sphere_block() const { return modes_.leftCols(split_) * scales_.head(split_).asDiagonal(); }

    /// Scaled remainder modes, n × (K_full - split_K).
    [[nodiscard]] Matrix remainder_block() const {
        const Index r = full_rank() - split_;
        return modes_.rightCols(r) * scales_.tail(r).asDiagonal();
    }

    [[nodiscard]] Vector apply_L(const Vector& coeffs) const {
        HISRD_REQUIRE(coeffs.size() == split_, "apply_L: coefficient length must equal split_K");
        return modes_.leftCols(split_) * (scales_.head(split_).cwiseProduct(coeffs));
    }

    /// Number of N(0,1) coordinates consumed by one remainder draw.
    [[nodiscard]] Index remainder_dim() const noexcept {
        return (full_rank() - split_) + (nugget_ > 0.0 ? grid_size() : 0);
    }

    /// Maps remainder coefficient columns (remainder_dim × B) to field
    /// realizations of ξ_R (n × B).
    void remainder_from_coeffs(const Eigen::Ref<const Matrix>& coeffs, Eigen::Ref<Matrix> out) const {
        HISRD_REQUIRE(coeffs.rows() == remainder_dim(), "remainder_from_coeffs: wrong coefficient dimension");
        HISRD_REQUIRE(out.rows() == grid_size() && out.cols() == coeffs.cols(), "remainder_from_coeffs: bad output");
        const Index r = full_rank() - split_;
        if (r > 0) {
            out.noalias() = modes_.rightCols(r) * (scales_.tail(r).asDiagonal() * coeffs.topRows(r));
        } else {
            out.setZero();
        }
        if (nugget_ > 0.0) add_nugget(coeffs.bottomRows(grid_size()), out);
    }

    /// out += √nugget (I - Φ Φᵀ) h for each column h.
    void add_nugget(const Eigen::Ref<const Matrix>& h, Eigen::Ref<Matrix> out) const {
        const double sd = std::sqrt(nugget_);
        out += sd * h;
        if (full_rank() > 0) out.noalias() -= modes_ * (sd * (modes_.transpose() * h));
    }

    /// `count` independent draws of ξ_R as columns (n × count). The stream
    /// dimension must equal remainder_dim() unless the remainder is empty.
    [[nodiscard]] Matrix sample_remainder(Index count, SampleStream& s) const {
        Matrix out = Matrix::Zero(grid_size(), count);
        if (remainder_dim() == 0) return out;
        HISRD_REQUIRE(s.dimension() == remainder_dim(), "sample_remainder: stream dimension != remainder_dim");
        Matrix g(remainder_dim(), count);
        s.fill_columns(g);
        remainder_from_coeffs(g, out);
        return out;
    }

    /// Number of N(0,1) coordinates consumed by one full draw.
    [[nodiscard]] Index total_dim() const noexcept { return full_rank() + (nugget_ > 0.0 ? grid_size() : 0); }

    /// `count` full realizations (n × count); stream dimension = total_dim().
    [[nodiscard]] Matrix total_sample(Index count, SampleStream& s) const {
        Matrix out = mean_.replicate(1, count);
        if (total_dim() == 0) return out;
        HISRD_REQUIRE(s.dimension() == total_dim(), "total_sample: stream dimension != total_dim");
        Matrix g(total_dim(), count);
        s.fill_columns(g);
        out.noalias() += modes_ * (scales_.asDiagonal() * g.topRows(full_rank()));
        if (nugget_ > 0.0) add_nugget(g.bottomRows(grid_size()), out);
        return out;
    }

    /// Φ diag(scales²) Φᵀ + nugget (I - Φ Φᵀ).
    [[nodiscard]] Matrix covariance() const {
        const Matrix ls = modes_ * scales_.asDiagonal();
        Matrix c = ls * ls.transpose();
        if (nugget_ > 0.0) {
            c.diagonal().array() += nugget_;
            c.noalias() -= nugget_ * (modes_ * modes_.transpose());
        }
        return c;
    }

    /// KL construction from a covariance matrix. Modes with eigenvalue at or
    /// below rank_tol·λ₁ are dropped.
    [[nodiscard]] static SpectralField from_covariance(const Vector& mean, const SymMatrix& cov, TruncationRule rule,
                                                       double rank_tol = 1e-14) {
        HISRD_REQUIRE(mean.size() == cov.order(), "from_covariance: mean/covariance size mismatch");
        const EigenDecomposition eig = sym_eigh(cov);
        const Index n = cov.order();
        Index kfull = 0;
        if (n > 0 && eig.values(0) > 0.0) {
            const double cut = rank_tol * eig.values(0);
            while (kfull < n && eig.values(kfull) > cut) ++kfull;
        }
        Index split = 0;
        if (rule.kind == TruncationRule::Kind::explicit_split) {
            HISRD_REQUIRE(rule.split >= 0 && rule.split <= kfull,
                          "from_covariance: explicit split exceeds the numerical rank");
            split = rule.split;
        } else {
            HISRD_REQUIRE(rule.fraction >= 0.0 && rule.fraction <= 1.0, "from_covariance: fraction must be in [0,1]");
            const double total = eig.values.head(kfull).sum();
            double acc = 0.0;
            while (split < kfull && acc < rule.fraction * total * (1.0 - 1e-12)) acc += eig.values(split++);
        }
        return SpectralField(mean, eig.vectors.leftCols(kfull), eig.values.head(kfull).cwiseSqrt(), split);
    }

    /// Binary cache artifact tagged with `key` (e.g. content_hash of the inputs).
    void save(const std::string& path, std::uint64_t key) const {
        std::ofstream os(path, std::ios::binary);
        if (!os) throw InvalidArgument("SpectralField::save: cannot open " + path);
        const std::int64_t dims[3] = {grid_size(), full_rank(), split_};
        os.write(kMagic, sizeof(kMagic));
        os.write(reinterpret_cast<const char*>(&key), sizeof(key));
        os.write(reinterpret_cast<const char*>(dims), sizeof(dims));
        os.write(reinterpret_cast<const char*>(&nugget_), sizeof(nugget_));
        write_block(os, mean_.data(), mean_.size());
        write_block(os, scales_.data(), scales_.size());
        write_block(os, modes_.data(), modes_.size());
        if (!os) throw InvalidArgument("SpectralField::save: write failed for " + path);
    }

    /// Loads a cache artifact; returns nullopt if it is missing or its key differs.
    [[nodiscard]] static std::optional<SpectralField> load(const std::string& path, std::uint64_t key) {
        std::ifstream is(path, std::ios::binary);
        if (!is) return std::nullopt;
        char magic[sizeof(kMagic)];
        std::uint64_t stored = 0;
        std::int64_t dims[3];
        double nugget = 0.0;
        is.read(magic, sizeof(magic));
        is.read(reinterpret_cast<char*>(&stored), sizeof(stored));
        is.read(reinterpret_cast<char*>(dims), sizeof(dims));
        is.read(reinterpret_cast<char*>(&nugget), sizeof(nugget));
        if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0 || stored != key) return std::nullopt;
        Vector mean(dims[0]);
        Vector scales(dims[1]);
        Matrix modes(dims[0], dims[1]);
        is.read(reinterpret_cast<char*>(mean.data()), static_cast<std::streamsize>(sizeof(double) * mean.size()));
        is.read(reinterpret_cast<char*>(scales.data()), static_cast<std::streamsize>(sizeof(double) * scales.size()));
        is.read(reinterpret_cast<char*>(modes.data()), static_cast<std::streamsize>(sizeof(double) * modes.size()));
        if (!is) return std::nullopt;
        return SpectralField(std::move(mean), std::move(modes), std::move(scales), dims[2], nugget);
    }

private:
    static constexpr char kMagic[8] = {'H', 'S', 'R', 'D', 'F', 'L', 'D', '1'};

    static void write_block(std::ofstream& os, const double* p, Index n) {
        os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(sizeof(double) * n));
    }

    Vector mean_;
    Matrix modes_;
    Vector scales_;
    Index split_ = 0;
    double nugget_ = 0.0;
};

/// FNV-1a over the raw bytes of the given arrays; used to key field caches.
class ContentHash {
public:
    ContentHash& add(const double* p, Index n) {
        const auto* b = reinterpret_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < sizeof(double) * static_cast<std::size_t>(n); ++i) {
            h_ ^= b[i];
            h_ *= 0x100000001B3ULL;
        }
        return *this;
    }
    ContentHash& add(const Vector& v) { return add(v.data(), v.size()); }
    ContentHash& add(const Matrix& m) { return add(m.data(), m.size()); }
    ContentHash& add(double x) { return add(&x, 1); }

    [[nodiscard]] std::uint64_t value() const noexcept { return h_; }

private:
    std::uint64_t h_ = 0xCBF29CE484222325ULL;
};

}  // namespace hisrd
