#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "hisrd/errors.hpp"
#include "hisrd/estimator.hpp"
#include "hisrd/sampling.hpp"
#include "hisrd/specfun.hpp"

namespace hisrd::theory {

/// Outcome of checking E_τ[F_χK(c/√τ)] = F_χr(c) with τ ~ Beta(r/2, (K-r)/2).
struct LemmaCheck {
    double c = 0.0;
    double lhs = 0.0;
    double rhs = 0.0;
    double std_error = 0.0;
    double z_score = 0.0;
};

namespace detail {

inline double z_of(double diff, double se) {
    if (se > 0.0) return diff / se;
    return diff == 0.0 ? 0.0 : std::copysign(specfun::kInf, diff);
}

inline double radial_cdf(int K, double c, double tau) {
    if (c == 0.0) return 0.0;
    return tau > 0.0 ? specfun::chi_cdf(K, c / std::sqrt(tau)) : 1.0;
}

}  // namespace detail

/// Checks the projection identity at several radii from one set of τ draws.
/// The stream must have dimension K.
[[nodiscard]] inline std::vector<LemmaCheck> lemma_identity_check(Index r, Index K, const std::vector<double>& cs,
                                                                  Index n_samples, SampleStream& stream) {
    HISRD_REQUIRE(r >= 1 && r <= K, "lemma_identity_check: need 1 <= r <= K");
    HISRD_REQUIRE(n_samples >= 2, "lemma_identity_check: need at least 2 samples");
    for (double c : cs) HISRD_REQUIRE(c >= 0.0, "lemma_identity_check: radii must be >= 0");
    const Vector tau = sample_beta_tau(r, K, n_samples, stream);
    std::vector<LemmaCheck> out;
    out.reserve(cs.size());
    for (double c : cs) {
        hisrd::detail::Moments m;
        for (Index i = 0; i < n_samples; ++i) m.add(detail::radial_cdf(static_cast<int>(K), c, tau(i)));
        LemmaCheck lc;
        lc.c = c;
        lc.lhs = m.mean;
        lc.rhs = specfun::chi_cdf(static_cast<int>(r), c);
        lc.std_error = std::sqrt(m.variance() / m.n);
        lc.z_score = detail::z_of(lc.lhs - lc.rhs, lc.std_error);
        out.push_back(lc);
    }
    return out;
}

[[nodiscard]] inline LemmaCheck lemma_identity_check(Index r, Index K, double c, Index n_samples,
                                                     SampleStream& stream) {
    return lemma_identity_check(r, K, std::vector<double>{c}, n_samples, stream).front();
}

/// W_MC(c) = F_χr(c)(1 - F_χr(c)) and the MC estimate of
/// Ŵ_K(c) = E_τ[(F_χK(c/√τ) - F_χr(c))²].
struct WValues {
    double w_mc = 0.0;
    double w_k = 0.0;
    double std_error = 0.0;  // of w_k
};

namespace detail {

inline WValues w_from_tau(Index r, Index K, double c, const Vector& tau) {
    const double fr = specfun::chi_cdf(static_cast<int>(r), c);
    hisrd::detail::Moments m;
    for (Index i = 0; i < tau.size(); ++i) {
        const double d = radial_cdf(static_cast<int>(K), c, tau(i)) - fr;
        m.add(d * d);
    }
    return {fr * (1.0 - fr), m.mean, std::sqrt(m.variance() / m.n)};
}

}  // namespace detail

[[nodiscard]] inline WValues w_functions(Index r, Index K, double c, Index n_samples, SampleStream& stream) {
    HISRD_REQUIRE(r >= 1 && r <= K, "w_functions: need 1 <= r <= K");
    HISRD_REQUIRE(c >= 0.0, "w_functions: radius must be >= 0");
    HISRD_REQUIRE(n_samples >= 2, "w_functions: need at least 2 samples");
    return detail::w_from_tau(r, K, c, sample_beta_tau(r, K, n_samples, stream));
}

/// Beta(r/2, (K-r)/2) variates as a ratio of gamma variates. Unlike
/// sample_beta_tau the cost does not grow with K.
[[nodiscard]] inline Vector beta_tau_gamma(Index r, Index K, Index count, std::uint64_t seed) {
    HISRD_REQUIRE(r >= 1 && r <= K, "beta_tau_gamma: need 1 <= r <= K");
    if (r == K) return Vector::Ones(count);
    std::mt19937_64 gen(seed);
    std::gamma_distribution<double> ga(0.5 * static_cast<double>(r), 1.0);
    std::gamma_distribution<double> gb(0.5 * static_cast<double>(K - r), 1.0);
    Vector tau(count);
    for (Index i = 0; i < count; ++i) {
        const double a = ga(gen);
        const double b = gb(gen);
        tau(i) = a / (a + b);
    }
    return tau;
}

struct RateExperimentConfig {
    Index r = 2;
    std::vector<Index> K_grid;
    std::vector<double> c_grid;
    Index samples = 100000;
    std::uint64_t seed = 1;
    Index exclude_smallest = 2;  // leading K values left out of the slope fit
    int threads = 1;
};

struct RateRow {
    Index K = 0;
    double c = 0.0;       // NaN for model-based rows
    double w_mc = 0.0;    // MC per-sample variance
    double w_k = 0.0;     // SRD per-sample variance
    double difference = 0.0;
    double std_error = 0.0;  // of difference
    bool non_positive = false;
    double rmse_mc = 0.0;    // √(w_mc / samples)
    double rmse_srd = 0.0;   // √(w_k / samples)
};

struct RateResult {
    std::vector<RateRow> rows;
    double slope = 0.0;      // fitted d log(difference) / d log K
    double intercept = 0.0;
    Index fitted_points = 0;
    Index non_positive = 0;  // points dropped because difference ≤ 0
};

namespace detail {

/// OLS slope of log y against log x.
inline std::pair<double, double> loglog_fit(const std::vector<double>& x, const std::vector<double>& y) {
    const auto n = static_cast<Index>(x.size());
    if (n < 2) throw NumericalError("InsufficientData", "degeneration_rate: fewer than two points left to fit");
    Eigen::MatrixXd A(n, 2);
    Vector b(n);
    for (Index i = 0; i < n; ++i) {
        A(i, 0) = 1.0;
        A(i, 1) = std::log(x[static_cast<std::size_t>(i)]);
        b(i) = std::log(y[static_cast<std::size_t>(i)]);
    }
    const Eigen::Vector2d coef = A.colPivHouseholderQr().solve(b);
    return {coef(1), coef(0)};
}

inline void validate(const RateExperimentConfig& cfg) {
    HISRD_REQUIRE(!cfg.K_grid.empty(), "degeneration_rate: K grid is empty");
    HISRD_REQUIRE(cfg.samples >= 2, "degeneration_rate: need at least 2 samples");
    for (Index K : cfg.K_grid) HISRD_REQUIRE(K >= cfg.r && cfg.r >= 1, "degeneration_rate: need 1 <= r <= min(K)");
}

/// Fits the slope on the per-K aggregated difference (mean over radii).
inline void fit(RateResult& res, const RateExperimentConfig& cfg, std::size_t per_k) {
    std::vector<double> xs, ys;
    const std::size_t nk = cfg.K_grid.size();
    for (std::size_t k = 0; k < nk; ++k) {
        double diff = 0.0;
        for (std::size_t j = 0; j < per_k; ++j) diff += res.rows[k * per_k + j].difference;
        diff /= static_cast<double>(per_k);
        if (static_cast<Index>(k) < cfg.exclude_smallest) continue;
        if (!(diff > 0.0)) {
            ++res.non_positive;
            continue;
        }
        xs.push_back(static_cast<double>(cfg.K_grid[k]));
        ys.push_back(diff);
    }
    for (const auto& row : res.rows) res.non_positive += row.non_positive ? 1 : 0;
    res.fitted_points = static_cast<Index>(xs.size());
    std::tie(res.slope, res.intercept) = loglog_fit(xs, ys);
}

}  // namespace detail

/// Variance gap between MC and SRD for a synthetic problem whose intrinsic
/// radius is fixed at c: difference(K, c) = W_MC(c) - Ŵ_K(c).
[[nodiscard]] inline RateResult degeneration_rate(const RateExperimentConfig& cfg) {
    detail::validate(cfg);
    HISRD_REQUIRE(!cfg.c_grid.empty(), "degeneration_rate: radius grid is empty");
    const std::size_t nk = cfg.K_grid.size();
    const std::size_t nc = cfg.c_grid.size();
    RateResult res;
    res.rows.resize(nk * nc);
    hisrd::detail::for_each_chunk(static_cast<Index>(nk), 1, cfg.threads, [&](Index k, Index, Index) {
        const Index K = cfg.K_grid[static_cast<std::size_t>(k)];
        const Vector tau = beta_tau_gamma(cfg.r, K, cfg.samples, derive_seed(cfg.seed, static_cast<std::uint64_t>(K)));
        for (std::size_t j = 0; j < nc; ++j) {
            const double c = cfg.c_grid[j];
            const WValues w = detail::w_from_tau(cfg.r, K, c, tau);
            RateRow& row = res.rows[static_cast<std::size_t>(k) * nc + j];
            row.K = K;
            row.c = c;
            row.w_mc = w.w_mc;
            row.w_k = w.w_k;
            row.difference = w.w_mc - w.w_k;
            row.std_error = w.std_error;
            row.non_positive = row.difference <= 0.0;
            const double n = static_cast<double>(cfg.samples);
            row.rmse_mc = std::sqrt(w.w_mc / n);
            row.rmse_srd = std::sqrt(std::max(w.w_k, 0.0) / n);
        }
    });
    detail::fit(res, cfg, nc);
    return res;
}

/// Model version. For a per-sample hiSRD value q = P(feasible | v, z), the
/// MC indicator variance exceeds the hiSRD variance by exactly E[q(1 - q)],
/// which is estimated directly from the hiSRD samples. make_model(K) must
/// return a model with sphere dimension K.
template <class MakeModel>
[[nodiscard]] RateResult degeneration_rate(const RateExperimentConfig& cfg, MakeModel&& make_model,
                                           SampleKind sampler = SampleKind::mc) {
    detail::validate(cfg);
    RateResult res;
    res.rows.resize(cfg.K_grid.size());
    const double nan = std::numeric_limits<double>::quiet_NaN();
    EstimatorOptions opt;
    opt.keep_per_sample = true;
    opt.threads = cfg.threads;
    for (std::size_t k = 0; k < cfg.K_grid.size(); ++k) {
        const Index K = cfg.K_grid[k];
        const auto model = make_model(K);
        const EstimateReport rep =
            estimate_hisrd(model, cfg.samples, {sampler, derive_seed(cfg.seed, static_cast<std::uint64_t>(K)), 0}, opt);
        const Vector& q = *rep.per_sample;
        hisrd::detail::Moments gap;
        for (Index i = 0; i < q.size(); ++i) gap.add(q(i) * (1.0 - q(i)));
        RateRow& row = res.rows[k];
        row.K = K;
        row.c = nan;
        row.w_mc = rep.value * (1.0 - rep.value);
        row.w_k = rep.variance;
        row.difference = gap.mean;
        row.std_error = std::sqrt(gap.variance() / gap.n);
        row.non_positive = row.difference <= 0.0;
        const double n = static_cast<double>(cfg.samples);
        row.rmse_mc = std::sqrt(row.w_mc / n);
        row.rmse_srd = std::sqrt(row.w_k / n);
    }
    detail::fit(res, cfg, 1);
    return res;
}

}  // namespace hisrd::theory
