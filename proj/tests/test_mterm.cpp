#include <gtest/gtest.h>

#include <boost/math/distributions/inverse_gamma.hpp>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <cmath>

#include "manifold/mterm.hpp"

using namespace manifold;

namespace {

std::vector<double> stationary_draws(const MTermParams& p, std::size_t n, double dt, std::uint64_t seed) {
    const double T_pre = mterm_prehistory(p, 1e-8);
    std::vector<double> out;
    for (std::size_t k = 0; k < n; ++k) {
        const auto path = sample_brownian(-T_pre - 2.0 * dt, 0.0, dt, seed, k);
        out.push_back(mterm_init(p, path, 1e-8));
    }
    return out;
}

}  // namespace

TEST(MTermMoments, DeterministicCase) {
    const auto s = mterm_moments({1.0, 0.0});
    EXPECT_DOUBLE_EQ(*s.mean, 1.0);
    EXPECT_DOUBLE_EQ(*s.variance, 0.0);
    EXPECT_DOUBLE_EQ(s.acf_rate, 1.0);
}

TEST(MTermMoments, ClosedForms) {
    const auto s = mterm_moments({2.0, 1.0});
    EXPECT_NEAR(*s.mean, 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(*s.variance, 2.0 / 9.0, 1e-15);
    EXPECT_DOUBLE_EQ(s.acf_rate, 1.5);
}

TEST(MTermMoments, UndefinedMarkers) {
    const auto s = mterm_moments({1.0, 1.2});
    EXPECT_TRUE(s.mean.has_value());
    EXPECT_FALSE(s.variance.has_value());
    const auto t = mterm_moments({1.0, 1.5});
    EXPECT_FALSE(t.mean.has_value());
    EXPECT_THROW(mterm_moments({0.0, 0.1}), std::domain_error);
    EXPECT_THROW(mterm_moments({-1.0, 0.1}), std::domain_error);
}

TEST(MTermMoments, MatchInverseGammaLaw) {
    for (const MTermParams p : {MTermParams{2.0, 1.0}, MTermParams{1.0, 0.5}, MTermParams{3.0, 0.4}}) {
        const double s2 = p.sigma_eff * p.sigma_eff;
        const boost::math::inverse_gamma_distribution<double> law(2.0 * p.g / s2, 2.0 / s2);
        const auto st = mterm_moments(p);
        EXPECT_NEAR(*st.mean, boost::math::mean(law), 1e-12);
        EXPECT_NEAR(*st.variance, boost::math::variance(law), 1e-12);
    }
}

TEST(MTermAutocorrelation, Values) {
    const MTermParams p{1.0, 0.5};
    EXPECT_DOUBLE_EQ(mterm_autocorrelation(p, 0.0), 1.0);
    EXPECT_NEAR(mterm_autocorrelation(p, 2.0), 0.17377, 1e-5);
    EXPECT_DOUBLE_EQ(mterm_autocorrelation(p, -1.3), mterm_autocorrelation(p, 1.3));
    EXPECT_THROW(mterm_autocorrelation({1.0, 1.0}, 1.0), std::domain_error);
}

TEST(MTermInit, DeterministicIntegral) {
    const MTermParams p{1.0, 0.0};
    const double T_pre = mterm_prehistory(p, 1e-8);
    const auto path = sample_brownian(-T_pre - 1e-3, 0.0, 1e-4, 1, 0);
    EXPECT_NEAR(mterm_init(p, path, 1e-8), 1.0, 2e-8);
}

TEST(MTermInit, RequiresPreHistory) {
    const auto path = sample_brownian(-1.0, 0.0, 1e-3, 1, 0);
    EXPECT_THROW(mterm_init({1.0, 0.5}, path, 1e-8), std::invalid_argument);
}

TEST(MTermInit, Deterministic) {
    const MTermParams p{2.0, 1.0};
    const auto path = sample_brownian(-10.0, 0.0, 1e-3, 5, 2);
    EXPECT_EQ(mterm_init(p, path, 1e-8), mterm_init(p, path, 1e-8));
}

TEST(MTermInit, EnsembleMean) {
    const MTermParams p{2.0, 1.0};
    const auto d = stationary_draws(p, 10000, 1e-3, 31);
    EXPECT_NEAR(mean(d), 2.0 / 3.0, 0.03 * 2.0 / 3.0);
}

TEST(MTermInit, DrawsFollowInverseGammaLaw) {
    const MTermParams p{1.0, 0.5};
    const auto d = stationary_draws(p, 10000, 2e-3, 32);
    const boost::math::inverse_gamma_distribution<double> law(2.0 * p.g / 0.25, 2.0 / 0.25);
    EXPECT_LT(ks_distance(d, [&](double x) { return boost::math::cdf(law, x); }), 0.015);
}

TEST(MTermStep, FixedPointWithoutNoise) {
    const MTermParams p{2.0, 0.0};
    EXPECT_DOUBLE_EQ(mterm_step(p, 0.5, 0.3, 1e-3), 0.5);
}

TEST(MTermStep, PositiveForExtremeIncrements) {
    const MTermParams p{50.0, 3.0};
    MTermDiagnostics d;
    for (double dW : {-3.0, -0.5, 0.0, 0.7, 4.0})
        for (double dt : {1e-3, 0.05, 0.5}) EXPECT_GT(mterm_step(p, 0.8, dW, dt, &d), 0.0);
    EXPECT_THROW(mterm_step(p, 1.0, 0.1, 0.0), std::invalid_argument);
}

TEST(MTermStep, PathwisePositive) {
    const MTermParams p{1.0, 1.2};
    const auto path = sample_brownian(-20.0, 200.0, 1e-2, 3, 0);
    const auto m = mterm_evolve(p, path, path.zero_index, path.size() - 1, 1e-8);
    for (double v : m) ASSERT_GT(v, 0.0);
}

TEST(MTermStep, ErgodicMean) {
    const MTermParams p{1.0, 0.5};
    const double T_pre = mterm_prehistory(p, 1e-8);
    const auto path = sample_brownian(-T_pre - 1e-3, 1e4, 1e-3, 41, 0);
    const auto m = mterm_evolve(p, path, path.zero_index, path.size() - 1, 1e-8);
    EXPECT_NEAR(mean(m), 8.0 / 7.0, 0.02 * 8.0 / 7.0);
}

TEST(MTermStep, NoNoiseCollapsesToInverseRate) {
    const MTermParams p{2.0, 0.0};
    const auto path = sample_brownian(-10.0, 5.0, 1e-3, 1, 0);
    const auto m = mterm_evolve(p, path, path.zero_index, path.size() - 1, 1e-8);
    // initial value carries the trapezoid bias h^2 g^2 / 12 relative to 1/g
    const double bias = 0.5 * 1e-6 * 4.0 / 12.0;
    for (double v : m) EXPECT_NEAR(v, 0.5, 1.1 * bias);
}

TEST(MTermStep, HeunAgreesWithQuadrature) {
    const MTermParams p{1.0, 0.5};
    const auto path = sample_brownian(-20.0, 20.0, 1e-3, 6, 0);
    const auto a = mterm_evolve(p, path, path.zero_index, path.size() - 1, 1e-8);
    const auto b = mterm_quadrature_series(p, path, path.zero_index, path.size() - 1, 1e-8);
    for (std::size_t i = 0; i < a.size(); i += 1000) {
        EXPECT_NEAR(a[i], b[i], 5e-3 * b[i]);
        EXPECT_NEAR(b[i], mterm_at(p, path, path.zero_index + i, 1e-8), 1e-7 * b[i]);
    }
}

TEST(MTermOrder, LargerDecayIsDominated) {
    const auto path = sample_brownian(-40.0, 10.0, 1e-3, 8, 0);
    const std::size_t last = path.size() - 1;
    const auto lo = mterm_quadrature_series({1.0, 0.6}, path, path.zero_index, last, 1e-8);
    const auto hi = mterm_quadrature_series({1.5, 0.6}, path, path.zero_index, last, 1e-8);
    for (std::size_t i = 0; i < lo.size(); ++i) ASSERT_LE(hi[i], lo[i]);
}

TEST(LogNormal, ParameterValues) {
    const auto ln = lognormal_approx({1.0, 0.5});
    EXPECT_NEAR(ln.kappa, 8.0 / 7.0, 1e-12);
    EXPECT_NEAR(ln.eta, 0.46657, 1e-5);
    EXPECT_NEAR(ln.Sigma, 0.39262, 1e-5);
    EXPECT_NEAR(ln.mu, 0.05646, 1e-5);
    EXPECT_THROW(lognormal_approx({1.0, 1.0}), std::domain_error);
}

TEST(LogNormal, VanishingNoiseConcentrates) {
    const auto ln = lognormal_approx({2.0, 1e-6});
    EXPECT_LT(ln.Sigma, 1e-5);
    EXPECT_NEAR(std::exp(ln.mu), 1.0, 1e-9);
}

TEST(LogNormal, DensityIntegratesToOne) {
    boost::math::quadrature::exp_sinh<double> integrator;
    for (const MTermParams p : {MTermParams{1.0, 0.25}, MTermParams{1.0, 0.75}, MTermParams{2.0, 1.0}}) {
        const double I = integrator.integrate([&](double x) { return mterm_lognormal_pdf(p, x); });
        EXPECT_NEAR(I, 1.0, 1e-6);
        EXPECT_NEAR(mterm_lognormal_cdf(p, 1e6), 1.0, 1e-12);
    }
}

TEST(Chebyshev, DeterministicBound) {
    EXPECT_DOUBLE_EQ(chebyshev_bound({{1.0, 0.0}}, 0.5), 2.0);
    const auto r = check_chebyshev({{1.0, 0.0}}, 0.5, 50, 1e-2, 1e-8, 1);
    EXPECT_EQ(r.hits, 50u);
}

TEST(Chebyshev, MonteCarloLevel) {
    const std::vector<MTermParams> list{{2.0, 1.0}};
    EXPECT_NEAR(chebyshev_bound(list, 0.1), 20.0 / 3.0, 1e-12);
    const auto r = check_chebyshev(list, 0.1, 10000, 1e-3, 1e-8, 2);
    EXPECT_GE(r.empirical, 0.9);
    EXPECT_GE(r.wilson.lo, 0.9);
}

TEST(Chebyshev, Errors) {
    EXPECT_THROW(chebyshev_bound({}, 0.1), std::invalid_argument);
    EXPECT_THROW(chebyshev_bound({{1.0, 2.0}}, 0.1), std::domain_error);
    EXPECT_THROW(chebyshev_bound({{1.0, 0.1}}, 1.0), std::invalid_argument);
}
