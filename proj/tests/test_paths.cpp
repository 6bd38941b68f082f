#include <gtest/gtest.h>

#include <cmath>

#include "manifold/stats.hpp"
#include "manifold/stochastic_paths.hpp"

using namespace manifold;

TEST(BrownianPath, ThreeNodePathPinnedAtOrigin) {
    const auto p = sample_brownian(0.0, 1.0, 0.5, 7, 0);
    ASSERT_EQ(p.size(), 3u);
    EXPECT_EQ(p.zero_index, 0u);
    EXPECT_EQ(p.values[0], 0.0);
}

TEST(BrownianPath, PreHistoryAnchorsZeroAtOrigin) {
    const auto p = sample_brownian(-2.0, 2.0, 0.01, 7, 0);
    EXPECT_EQ(p.size(), 401u);
    EXPECT_EQ(p.at(0.0), 0.0);
    EXPECT_NE(p.at(-1.0), 0.0);
}

TEST(BrownianPath, IdenticalInputsGiveIdenticalValues) {
    const auto a = sample_brownian(-2.0, 2.0, 0.01, 7, 0);
    const auto b = sample_brownian(-2.0, 2.0, 0.01, 7, 0);
    EXPECT_EQ(a.values, b.values);
    const auto c = sample_brownian(-2.0, 2.0, 0.01, 7, 1);
    EXPECT_NE(a.values, c.values);
}

TEST(BrownianPath, GridsOfOneStreamShareIncrements) {
    const auto a = sample_brownian(-1.0, 1.0, 0.01, 3, 5);
    const auto b = sample_brownian(-3.0, 2.0, 0.01, 3, 5);
    EXPECT_EQ(increment(a, -0.5, 0.75), increment(b, -0.5, 0.75));
}

TEST(BrownianPath, RejectsBadStepAndOversizedGrid) {
    EXPECT_THROW(sample_brownian(0.0, 1.0, 0.0, 1, 0), std::invalid_argument);
    EXPECT_THROW(sample_brownian(0.0, 1.0, -0.1, 1, 0), std::invalid_argument);
    EXPECT_THROW(sample_brownian(0.0, 1.0, 1e-3, 1, 0, 100), std::length_error);
}

TEST(BrownianPath, SecondMomentAtOneIsOne) {
    const std::size_t n = 10000;
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const auto p = sample_brownian(0.0, 1.0, 0.01, 11, k);
        s += p.at(1.0) * p.at(1.0);
    }
    EXPECT_NEAR(s / n, 1.0, 0.03);
}

TEST(BrownianPath, ScaledPathHasUnitVariance) {
    const double eps = 0.05;
    std::vector<double> x;
    for (std::size_t k = 0; k < 4000; ++k) {
        const auto p = sample_brownian(0.0, 1.0 / eps, 0.05, 12, k);
        x.push_back(std::sqrt(eps) * p.at(1.0 / eps));
    }
    EXPECT_NEAR(variance(x), 1.0, 0.07);
}

TEST(Increment, ZeroAndOriginIdentities) {
    const auto p = sample_brownian(-1.0, 2.0, 0.01, 2, 0);
    EXPECT_EQ(increment(p, 0.5, 0.5), 0.0);
    EXPECT_EQ(increment(p, 0.0, 1.0), p.at(1.0));
}

TEST(Increment, TelescopesExactly) {
    const auto p = sample_brownian(-5.0, 5.0, 0.001, 9, 3);
    for (double s : {-4.9, -2.3, 0.0, 1.7})
        for (double t : {-1.1, 0.4, 2.2})
            for (double u : {-0.6, 3.3, 4.95}) EXPECT_EQ(increment(p, s, t) + increment(p, t, u), increment(p, s, u));
}

TEST(Increment, SnapsWithinHalfStepAndRejectsOutside) {
    const auto p = sample_brownian(0.0, 1.0, 0.1, 1, 0);
    EXPECT_EQ(p.index_of(0.32), 3u);
    EXPECT_THROW(increment(p, 0.0, 1.2), std::out_of_range);
    EXPECT_THROW(increment(p, -0.2, 0.5), std::out_of_range);
}

TEST(OuStationary, ZeroNoiseStaysAtZero) {
    const auto p = sample_brownian(0.0, 10.0, 0.01, 1, 0);
    const auto z = ou_stationary(p, 0.0, true);
    for (double v : z.values) EXPECT_EQ(v, 0.0);
}

TEST(OuStationary, SatisfiesItsRecursion) {
    const auto p = sample_brownian(0.0, 5.0, 0.01, 1, 0);
    const auto z = ou_stationary(p, 0.7);
    const double h = p.dt;
    const double scale = 0.7 * std::sqrt(-std::expm1(-2.0 * h) / (2.0 * h));
    for (std::size_t i = 0; i + 1 < p.size(); ++i)
        EXPECT_DOUBLE_EQ(z.values[i + 1], std::exp(-h) * z.values[i] + scale * p.dW(i));
}

TEST(OuStationary, LongRunVarianceAndAutocorrelation) {
    const auto p = sample_brownian(-50.0, 20000.0, 0.01, 4, 0);
    const auto z = ou_stationary(p, 1.0);
    EXPECT_NEAR(variance(z.values), 0.5, 0.025);
    const auto acf = autocorrelation(z.values, 100);
    EXPECT_NEAR(acf[50], std::exp(-0.5), 0.03);
    EXPECT_NEAR(acf[100], std::exp(-1.0), 0.03);
}

TEST(OuStationary, StationaryStartHasStationaryVariance) {
    std::vector<double> z0;
    for (std::size_t k = 0; k < 5000; ++k) z0.push_back(ou_stationary(sample_brownian(0.0, 0.1, 0.05, 8, k), 1.0).values[0]);
    EXPECT_NEAR(variance(z0), 0.5, 0.04);
}

TEST(SupBound, ClosedFormValues) {
    EXPECT_NEAR(sup_bound_gamma(1.0, 1.0 - std::exp(-2.0)), 2.0, 1e-12);
    EXPECT_NEAR(sup_bound_gamma(2.0, 0.1), std::sqrt(-4.0 * std::log(0.9)), 1e-12);
    EXPECT_NEAR(sup_bound_gamma(2.0, 0.1), 0.6492, 1e-4);
    EXPECT_THROW(sup_bound_gamma(1.0, 0.0), std::invalid_argument);
    EXPECT_THROW(sup_bound_gamma(1.0, 1.5), std::invalid_argument);
    EXPECT_THROW(sup_bound_gamma(0.0, 0.5), std::invalid_argument);
}

// With gamma = sqrt(-2T ln(1-chi)) the event has probability far below 1 - chi;
// the reflection-principle level sqrt(2T ln(2/chi)) does reach it.
TEST(SupBound, MonteCarloAgainstBothLevels) {
    const double eps = 0.05, T = 1.0, chi = 0.1;
    const auto literal = check_sup_bound(eps, T, chi, sup_bound_gamma(T, chi), 2000, 0.01, 21);
    EXPECT_LT(literal.empirical, 0.1);
    EXPECT_FALSE(literal.holds);
    const auto reflected = check_sup_bound(eps, T, chi, sup_bound_gamma_reflection(T, chi), 2000, 0.01, 21);
    EXPECT_GE(reflected.empirical, 0.9);
    EXPECT_TRUE(reflected.holds);
}
