#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <memory>
#include <optional>

#include "hisrd/errors.hpp"
#include "hisrd/estimator.hpp"
#include "hisrd/field.hpp"

namespace hisrd {

/// Pointwise bounds lower ≤ y ≤ upper on an affine image of a SpectralField,
///
///     y = shift + T (ξ - mean),   ξ ~ ref,
///
/// with T = I when no transform is given. Constraints are ordered as all
/// lower rows (g = lower - y) followed by all upper rows (g = y - upper);
/// a side given as nullopt is left out. Bounds may be ±∞.
///
/// A sphere dimension K above the field rank pads the sphere with zero
/// columns: the SRD radius then runs over K coordinates of which only the
/// first K_full move the field, which leaves the law of y unchanged.
class FieldBoundModel : public AffineConstraintModel {
public:
    FieldBoundModel(std::shared_ptr<const SpectralField> ref, Index K, Vector shift, Matrix transform,
                    std::optional<Vector> lower, std::optional<Vector> upper)
        : ref_(std::move(ref)), K_(K), shift_(std::move(shift)), T_(std::move(transform)),
          lower_(std::move(lower)), upper_(std::move(upper)) {
        HISRD_REQUIRE(ref_ != nullptr, "FieldBoundModel: reference field required");
        HISRD_REQUIRE(K_ >= 1, "FieldBoundModel: sphere dimension must be >= 1");
        HISRD_REQUIRE(lower_ || upper_, "FieldBoundModel: need at least one bound side");
        const Index n = ref_->grid_size();
        HISRD_REQUIRE(T_.size() == 0 || T_.cols() == n, "FieldBoundModel: transform must have n columns");
        const Index n_out = T_.size() == 0 ? n : T_.rows();
        HISRD_REQUIRE(shift_.size() == n_out, "FieldBoundModel: shift has wrong length");
        HISRD_REQUIRE(!lower_ || lower_->size() == n_out, "FieldBoundModel: lower bound has wrong length");
        HISRD_REQUIRE(!upper_ || upper_->size() == n_out, "FieldBoundModel: upper bound has wrong length");
        k_act_ = std::min(K_, ref_->full_rank());
        const SpectralField split = ref_->with_split(k_act_);
        sphere_map_ = split.sphere_block();
        rem_map_ = split.remainder_block();
        if (T_.size() != 0) {
            sphere_map_ = (T_ * sphere_map_).eval();
            rem_map_ = (T_ * rem_map_).eval();
        }
        lower_off_ = lower_ ? Vector(*lower_ - shift_) : Vector();
        upper_off_ = upper_ ? Vector(shift_ - *upper_) : Vector();
    }

    [[nodiscard]] Index constraint_count() const override {
        return (lower_ ? output_size() : 0) + (upper_ ? output_size() : 0);
    }
    [[nodiscard]] Index sphere_dim() const override { return K_; }
    [[nodiscard]] Index remainder_dim() const override {
        return rem_map_.cols() + (ref_->nugget() > 0.0 ? ref_->grid_size() : 0);
    }

    [[nodiscard]] Index output_size() const noexcept { return shift_.size(); }
    [[nodiscard]] Index active_sphere_dim() const noexcept { return k_act_; }
    [[nodiscard]] const Vector& shift() const noexcept { return shift_; }
    [[nodiscard]] const Matrix& sphere_map() const noexcept { return sphere_map_; }
    [[nodiscard]] const Matrix& remainder_map() const noexcept { return rem_map_; }
    [[nodiscard]] const SpectralField& reference() const noexcept { return *ref_; }
    [[nodiscard]] bool has_lower() const noexcept { return lower_.has_value(); }
    [[nodiscard]] bool has_upper() const noexcept { return upper_.has_value(); }

    /// Remainder part of y (before the shift) for coefficient columns z.
    void remainder_field(const Eigen::Ref<const Matrix>& z, Eigen::Ref<Matrix> out) const {
        const Index r = rem_map_.cols();
        if (r > 0) out.noalias() = rem_map_ * z.topRows(r);
        else out.setZero();
        if (ref_->nugget() > 0.0) {
            const Index n = ref_->grid_size();
            const Matrix p = projected_nugget(z.bottomRows(n));
            if (T_.size() == 0) out += p;
            else out.noalias() += T_ * p;
        }
    }

    /// √nugget (I - Φ Φᵀ) h, the nugget part of the reference remainder.
    [[nodiscard]] Matrix projected_nugget(const Eigen::Ref<const Matrix>& h) const {
        Matrix p = std::sqrt(ref_->nugget()) * h;
        if (ref_->full_rank() > 0) p.noalias() -= ref_->modes() * (ref_->modes().transpose() * p);
        return p;
    }

    void eval_alpha(const Eigen::Ref<const Matrix>& z, Eigen::Ref<Matrix> alpha) const override {
        const Index B = z.cols();
        const Index n = output_size();
        Matrix f(n, B);
        remainder_field(z, f);
        Index row = 0;
        if (lower_) {
            alpha.middleRows(row, n) = lower_off_.replicate(1, B) - f;
            row += n;
        }
        if (upper_) alpha.middleRows(row, n) = upper_off_.replicate(1, B) + f;
    }

    void eval_beta(const Eigen::Ref<const Matrix>& v, Eigen::Ref<Matrix> beta) const override {
        const Index n = output_size();
        Index row = 0;
        if (lower_) {
            beta.middleRows(row, n).noalias() = -sphere_map_ * v.topRows(k_act_);
            row += n;
        }
        if (upper_) {
            if (lower_) beta.middleRows(row, n) = -beta.topRows(n);
            else beta.middleRows(row, n).noalias() = sphere_map_ * v.topRows(k_act_);
        }
    }

    [[nodiscard]] Vector center_values() const override {
        Vector c(constraint_count());
        Index row = 0;
        if (lower_) {
            c.segment(row, output_size()) = lower_off_;
            row += output_size();
        }
        if (upper_) c.segment(row, output_size()) = upper_off_;
        return c;
    }

    /// Field index and sign (∂g_j/∂y_m = sign) of constraint j.
    [[nodiscard]] std::pair<Index, double> constraint_site(Index j) const {
        if (lower_ && j < output_size()) return {j, -1.0};
        return {lower_ ? j - output_size() : j, 1.0};
    }

protected:
    std::shared_ptr<const SpectralField> ref_;
    Index K_;
    Index k_act_ = 0;
    Vector shift_;
    Matrix T_;
    std::optional<Vector> lower_;
    std::optional<Vector> upper_;
    Vector lower_off_;
    Vector upper_off_;
    Matrix sphere_map_;
    Matrix rem_map_;
};

/// Two-sided box |ξ_i| ≤ half_width_i on a field with independent
/// coordinates of the given standard deviations. The reference toy problem.
[[nodiscard]] inline FieldBoundModel make_box_model(const Vector& sd, const Vector& half_width, Index K) {
    HISRD_REQUIRE(sd.size() == half_width.size(), "make_box_model: size mismatch");
    const Index d = sd.size();
    std::vector<Index> order(static_cast<std::size_t>(d));
    for (Index i = 0; i < d; ++i) order[static_cast<std::size_t>(i)] = i;
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return sd(a) > sd(b); });
    Matrix modes = Matrix::Zero(d, d);
    Vector scales(d);
    for (Index k = 0; k < d; ++k) {
        modes(order[static_cast<std::size_t>(k)], k) = 1.0;
        scales(k) = sd(order[static_cast<std::size_t>(k)]);
    }
    auto field = std::make_shared<const SpectralField>(Vector::Zero(d), modes, scales, 0);
    return FieldBoundModel(field, K, Vector::Zero(d), Matrix(), Vector(-half_width), half_width);
}

}  // namespace hisrd
