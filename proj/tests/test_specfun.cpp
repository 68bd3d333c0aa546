#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "hisrd/errors.hpp"
#include "hisrd/specfun.hpp"

using namespace hisrd::specfun;

namespace {

// erf by its Maclaurin series in long double; converges fast for |x| ≤ 3.
long double erf_series(long double x) {
    long double term = x, sum = x;
    for (int n = 1; n < 200; ++n) {
        term *= -x * x / n;
        const long double add = term / (2 * n + 1);
        sum += add;
        if (std::fabs(add) < 1e-22L) break;
    }
    return sum * 2.0L / std::sqrt(std::numbers::pi_v<long double>);
}

double bisect_quantile(double p) {
    double lo = -40.0, hi = 40.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (normal_cdf(mid) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

TEST(ChiCdf, Examples) {
    for (int K : {1, 2, 7, 100}) EXPECT_EQ(chi_cdf(K, 0.0), 0.0);
    EXPECT_NEAR(chi_cdf(2, 2.0), 1.0 - std::exp(-2.0), 1e-15);
    EXPECT_NEAR(chi_cdf(1, 1.0), 2.0 * normal_cdf(1.0) - 1.0, 1e-15);
    EXPECT_NEAR(chi_cdf(1, 1.0), 0.6826894921370859, 1e-15);
    EXPECT_EQ(chi_cdf(3, kInf), 1.0);
}

TEST(ChiCdf, ClosedFormsOnGrid) {
    for (int i = 0; i < 20; ++i) {
        const double x = 0.05 + 0.4 * i;
        const double h = 0.5 * x * x;
        EXPECT_NEAR(chi_cdf(1, x), std::erf(x / std::numbers::sqrt2), 1e-12) << x;
        EXPECT_NEAR(chi_cdf(2, x), -std::expm1(-h), 1e-12) << x;
        EXPECT_NEAR(chi_cdf(4, x), 1.0 - std::exp(-h) * (1.0 + h), 1e-12) << x;
    }
}

TEST(ChiCdf, MatchesIncompleteGammaOracleUpToLargeDof) {
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> dof(1, 2048);
    std::uniform_real_distribution<double> frac(0.0, 1.0);
    for (int t = 0; t < 3000; ++t) {
        const int K = dof(rng);
        // Concentrate draws around the bulk √K, plus uniform draws up to 200.
        const double x = (t % 2) ? 200.0 * frac(rng) : std::sqrt(K) * (0.5 + frac(rng));
        const double ref = boost::math::gamma_p(0.5 * K, 0.5 * x * x);
        ASSERT_NEAR(chi_cdf(K, x), ref, 1e-12) << "K=" << K << " x=" << x;
    }
}

TEST(ChiPdf, Examples) {
    EXPECT_EQ(chi_pdf(3, kInf), 0.0);
    EXPECT_NEAR(chi_pdf(2, 1.0), std::exp(-0.5), 1e-15);
    EXPECT_NEAR(chi_pdf(1, 0.0), std::sqrt(2.0 / std::numbers::pi), 1e-15);
    EXPECT_EQ(chi_pdf(2, 0.0), 0.0);
    EXPECT_EQ(chi_pdf(5, 0.0), 0.0);
}

TEST(ChiPdf, IntegratesToOne) {
    for (int K = 1; K <= 64; ++K) {
        const auto f = [K](double x) { return chi_pdf(K, x); };
        const double mode = std::sqrt(std::max(K - 1, 0));
        double err = 0.0;
        const double a = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.0, mode, 15, 1e-14, &err);
        const double b =
            boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, mode, kInf, 15, 1e-14, &err);
        EXPECT_NEAR(a + b, 1.0, 1e-8) << K;
    }
}

TEST(ChiPdf, IsDerivativeOfCdf) {
    for (int K : {1, 2, 3, 10, 64, 500}) {
        // ±3 standard deviations (≈ 0.7 each) around the bulk; further out the
        // CDF saturates and the difference quotient loses its digits.
        const double c = std::sqrt(static_cast<double>(K));
        for (double x = std::max(0.2, c - 2.1); x <= c + 2.1; x += 0.25) {
            const double h = 1e-5 * x;
            const double fd = (chi_cdf(K, x + h) - chi_cdf(K, x - h)) / (2.0 * h);
            EXPECT_NEAR(fd / chi_pdf(K, x), 1.0, 1e-6) << "K=" << K << " x=" << x;
        }
    }
}

TEST(ChiCdf, MonotoneInX) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 40.0);
    std::uniform_int_distribution<int> dof(1, 400);
    for (int t = 0; t < 20000; ++t) {
        const int K = dof(rng);
        double a = u(rng), b = u(rng);
        if (a > b) std::swap(a, b);
        ASSERT_LE(chi_cdf(K, a), chi_cdf(K, b)) << K << " " << a << " " << b;
    }
}

TEST(ChiCdf, NonincreasingInDof) {
    for (double x : {0.3, 1.0, 2.5, 7.0, 20.0}) {
        for (int K = 1; K < 300; ++K) ASSERT_GE(chi_cdf(K, x), chi_cdf(K + 1, x)) << K << " " << x;
    }
}

TEST(Chi2Cdf, SharesImplementation) {
    EXPECT_EQ(chi2_cdf(2, 0.0), 0.0);
    EXPECT_NEAR(chi2_cdf(2, 4.0), 1.0 - std::exp(-2.0), 1e-15);
    EXPECT_EQ(chi2_cdf(5, 5.0), chi_cdf(5, std::sqrt(5.0)));
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 30.0);
    for (int t = 0; t < 5000; ++t) {
        const double x = u(rng);
        const int K = 1 + t % 97;
        ASSERT_EQ(chi2_cdf(K, x * x), chi_cdf(K, x));
    }
}

TEST(Normal, CdfValues) {
    EXPECT_EQ(normal_cdf(0.0), 0.5);
    EXPECT_NEAR(normal_cdf(1.0), 0.8413447460685429, 1e-15);
    for (double x = -3.0; x <= 3.0; x += 0.125) {
        const double ref = static_cast<double>(0.5L + 0.5L * erf_series(x / std::sqrt(2.0L)));
        EXPECT_NEAR(normal_cdf(x), ref, 1e-14) << x;
    }
}

TEST(Normal, InverseExamples) {
    EXPECT_NEAR(normal_inv_cdf(0.975), 1.959963984540054, 1e-9);
    EXPECT_NEAR(normal_inv_cdf(0.975), bisect_quantile(0.975), 1e-9);
    EXPECT_EQ(normal_inv_cdf(0.5), 0.0);
    for (double p : {1e-300, 1e-10, 0.01, 0.3, 0.7, 0.99}) EXPECT_NEAR(normal_inv_cdf(p), bisect_quantile(p), 1e-9) << p;
}

TEST(Normal, InverseRoundTrip) {
    for (double x = -6.0; x <= 5.5; x += 0.01) EXPECT_NEAR(normal_inv_cdf(normal_cdf(x)), x, 1e-9) << x;
    // Above ~5.5 the probability itself carries the error: one ulp of p near 1
    // moves the quantile by ulp(p)/pdf(x).
    for (double x = 5.5; x <= 6.0; x += 0.01) {
        const double p = normal_cdf(x);
        const double tol = 1e-9 + 2.0 * (std::nextafter(p, 2.0) - p) / normal_pdf(x);
        EXPECT_NEAR(normal_inv_cdf(p), x, tol) << x;
    }
}

TEST(Normal, InverseRejectsOutsideOpenInterval) {
    EXPECT_THROW((void)normal_inv_cdf(0.0), hisrd::InvalidArgument);
    EXPECT_THROW((void)normal_inv_cdf(1.0), hisrd::InvalidArgument);
    EXPECT_THROW((void)normal_inv_cdf(-0.1), hisrd::InvalidArgument);
    EXPECT_THROW((void)normal_inv_cdf(std::nan("")), hisrd::InvalidArgument);
}

TEST(BetaPdf, Examples) {
    EXPECT_NEAR(beta_pdf(1, 1, 0.3), 1.0, 1e-14);
    EXPECT_NEAR(beta_pdf(2, 2, 0.5), 1.5, 1e-14);
    EXPECT_NEAR(beta_pdf(1, 50, 0.0), 50.0, 1e-11);
    // Large b stays finite: b (1 - x)^(b - 1) for a = 1.
    EXPECT_NEAR(beta_pdf(1, 4000, 1e-3) / (4000.0 * std::pow(1.0 - 1e-3, 3999.0)), 1.0, 1e-10);
}
