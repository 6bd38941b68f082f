#include <gtest/gtest.h>

#include <cmath>

#include "manifold/reduced_model.hpp"

using namespace manifold;

namespace {

ReducedCoeffs single_mode(double eps, double sigma) {
    ReducedCoeffs c;
    c.epsilon = eps;
    c.sigma = sigma;
    c.stable_eigs = {-1.0};
    c.b11 = {-1.0};
    c.fcross = {1.0};
    return c;
}

BrownianPath path_for(const ReducedCoeffs& c, double T, double dt, std::uint64_t stream, double extra = 0.0) {
    const double pre = reduced_prehistory(c, 1e-8) + extra;
    return sample_brownian(-(std::ceil(pre / dt) + 1.0) * dt, T, dt, 17, stream);
}

}  // namespace

TEST(Dissipation, Examples) {
    EXPECT_TRUE(check_dissipation(single_mode(0.1, 0.1)).ok);
    auto c = single_mode(0.1, 0.1);
    c.b11 = {1.0};
    c.fcross = {0.0};
    EXPECT_FALSE(check_dissipation(c).ok);
    c.fcross = {5.0};
    EXPECT_FALSE(check_dissipation(c).ok);
    EXPECT_TRUE(check_dissipation(triad_coeffs(0.1, 0.3)).ok);
}

TEST(Dissipation, IntegrationRejectsViolation) {
    auto c = single_mode(0.1, 0.1);
    c.b11 = {1.0};
    const auto path = path_for(single_mode(0.1, 0.1), 1.0, 1e-3, 0);
    EXPECT_THROW(integrate_reduced(c, path, 0.1, 1.0, 1e-3), std::invalid_argument);
}

TEST(ReducedCoeffs, ValidateShapes) {
    auto c = single_mode(0.1, 0.1);
    c.stable_eigs = {0.5};
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = single_mode(0.1, 0.1);
    c.fcross = {1.0, 2.0};
    EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Integrate, ZeroStaysZero) {
    const auto c = triad_coeffs(0.1, std::sqrt(0.1));
    const auto path = path_for(c, 5.0, 1e-3, 1);
    const auto tr = integrate_reduced(c, path, 0.0, 5.0, 1e-3);
    for (const auto& s : tr.states) {
        EXPECT_EQ(s.X, 0.0);
        for (double v : s.phi) EXPECT_EQ(v, 0.0);
    }
}

TEST(Integrate, ParameterizationIdentity) {
    const auto c = triad_coeffs(0.1, std::sqrt(0.1));
    const auto path = path_for(c, 20.0, 1e-3, 2);
    const auto tr = integrate_reduced(c, path, std::sqrt(0.1), 20.0, 1e-3);
    double scale = 0.0, err = 0.0;
    for (const auto& s : tr.states)
        for (std::size_t n = 0; n < c.stable_count(); ++n) {
            scale = std::max(scale, std::abs(s.phi[n]));
            err = std::max(err, std::abs(s.phi[n] - c.b11[n] * s.m[n] * s.X * s.X));
        }
    EXPECT_LT(err, 1e-3 * scale);
}

TEST(Integrate, OddInX) {
    const auto c = triad_coeffs(0.1, std::sqrt(0.1));
    const auto path = path_for(c, 10.0, 1e-3, 3);
    const auto p = integrate_reduced(c, path, 0.3, 10.0, 1e-3);
    const auto m = integrate_reduced(c, path, -0.3, 10.0, 1e-3);
    for (std::size_t k = 0; k < p.states.size(); ++k) {
        EXPECT_EQ(p.states[k].X, -m.states[k].X);
        EXPECT_EQ(p.states[k].phi, m.states[k].phi);
    }
}

TEST(Integrate, DeterministicFixedPoint) {
    const double eps = 0.1;
    const auto c = single_mode(eps, 0.0);
    const double g = 2.0 * eps + 1.0;
    const auto path = path_for(c, 200.0, 1e-2, 0);
    const auto tr = integrate_reduced(c, path, 0.05, 200.0, 1e-2);
    EXPECT_NEAR(tr.states.back().X, std::sqrt(eps * g), 1e-6);
    for (const auto& s : tr.states) EXPECT_LE(std::abs(s.X), std::sqrt(eps * g) * (1.0 + 1e-9));
}

TEST(Integrate, CubicCoefficientNegative) {
    const auto c = triad_coeffs(0.05, 0.2);
    EXPECT_LT(cubic_coefficient(c, {0.7, 0.3}), 0.0);
}

TEST(Integrate, LinearRegimeMatchesGeometricSolution) {
    const double eps = 0.1, sigma = 0.3;
    const auto c = single_mode(eps, sigma);
    const auto path = path_for(c, 10.0, 1e-3, 4);
    const double X0 = 1e-8;
    const auto tr = integrate_reduced(c, path, X0, 10.0, 1e-3);
    for (std::size_t k = 0; k < tr.states.size(); k += 500) {
        const double t = tr.times[k];
        const double exact = X0 * std::exp(eps * t + sigma * path.values[path.zero_index + k]);
        EXPECT_NEAR(tr.states[k].X, exact, 1e-3 * exact);
    }
}

TEST(Integrate, PathTooShort) {
    const auto c = single_mode(0.1, 0.1);
    const auto path = path_for(c, 1.0, 1e-3, 0);
    EXPECT_THROW(integrate_reduced(c, path, 0.1, 2.0, 1e-3), std::invalid_argument);
    EXPECT_THROW(integrate_reduced(c, path, 0.1, 1.0, 1.5e-3), std::invalid_argument);
}

TEST(StationaryAmplitude, DeterministicValue) {
    const double eps = 0.1, g = 2.0 * eps + 1.0;
    const auto path = sample_brownian(-90.0, 0.0, 1e-3, 1, 0);
    EXPECT_NEAR(stationary_amplitude(eps, 1.0, 0.0, g, path, 0.0, 1e-6), std::sqrt(eps * g), 1e-5);
    EXPECT_NEAR(stationary_amplitude(eps, 4.0, 0.0, g, path, 0.0, 1e-6), std::sqrt(eps * g / 4.0), 1e-5);
}

TEST(StationaryAmplitude, Errors) {
    const auto path = sample_brownian(-1.0, 0.0, 1e-3, 1, 0);
    EXPECT_THROW(stationary_amplitude(0.0, 1.0, 0.1, 1.0, path, 0.0, 1e-6), std::domain_error);
    EXPECT_THROW(stationary_amplitude(0.1, -1.0, 0.1, 1.0, path, 0.0, 1e-6), std::domain_error);
    EXPECT_THROW(stationary_amplitude(0.1, 1.0, 0.1, 1.2, path, 0.0, 1e-6), std::invalid_argument);
}

TEST(StationaryAmplitude, ReducedDynamicsTrackIt) {
    const double eps = 0.1, sigma = std::sqrt(eps), g = 2.0 * eps + 1.0;
    const auto c = single_mode(eps, sigma);
    const auto path = sample_brownian(-120.0, 20.0, 1e-3, 5, 0);
    const std::size_t z = path.zero_index;
    const auto a = stationary_amplitude_series(eps, 1.0, sigma, g, path, z, z + 20000, 1e-8);
    const auto tr = integrate_reduced(c, path, a[0], 20.0, 1e-3);
    for (std::size_t k = 0; k < a.size(); k += 100) EXPECT_NEAR(tr.states[k].X, a[k], 1e-2 * a[k]);
}

TEST(StationaryAmplitude, SquareRootScaling) {
    std::vector<double> ratio;
    for (double eps : {0.02, 0.08, 0.32}) {
        const double g = 2.0 * eps + 1.0;
        const double dt = 5e-3;
        const double span = std::log(1e6) / (2.0 * eps) + std::log(1e6) / g + 1.0;
        std::vector<double> a;
        for (std::size_t k = 0; k < 200; ++k) {
            const auto path = sample_brownian(-std::ceil(span / dt) * dt, 0.0, dt, 9, k);
            a.push_back(stationary_amplitude(eps, 1.0, std::sqrt(eps), g, path, 0.0, 1e-6));
        }
        ratio.push_back(median(a) / std::sqrt(eps));
    }
    const auto [lo, hi] = std::minmax_element(ratio.begin(), ratio.end());
    EXPECT_LT(*hi / *lo, 1.5);
}

TEST(Residual, ZeroTrajectory) {
    const auto c = triad_coeffs(0.1, std::sqrt(0.1));
    const auto path = path_for(c, 2.0, 1e-3, 1);
    const auto tr = integrate_reduced(c, path, 0.0, 2.0, 1e-3);
    const auto r = residual(tr, c, path);
    for (std::size_t k = 0; k < r.r1.size(); ++k) {
        EXPECT_EQ(r.r1[k], 0.0);
        EXPECT_EQ(norm2(r.r2[k]), 0.0);
    }
}

TEST(Residual, NeedsTensor) {
    auto c = single_mode(0.1, 0.1);
    const auto path = path_for(c, 1.0, 1e-3, 1);
    const auto tr = integrate_reduced(c, path, 0.1, 1.0, 1e-3);
    EXPECT_THROW(residual(tr, c, path), std::invalid_argument);
}

TEST(Residual, TwoRoutesAgree) {
    const double eps = 0.1;
    const auto c = triad_coeffs(eps, std::sqrt(eps));
    const auto path = path_for(c, 10.0, 1e-4, 6);
    const auto tr = integrate_reduced(c, path, std::sqrt(eps), 10.0, 1e-4);
    const auto a = residual(tr, c, path);
    const auto b = residual_from_definition(tr, c, path);
    double s1 = 0.0, d1 = 0.0, s2 = 0.0, d2 = 0.0;
    for (std::size_t k = 0; k < a.r1.size(); ++k) {
        s1 = std::max(s1, std::abs(a.r1[k]));
        d1 = std::max(d1, std::abs(a.r1[k] - b.r1[k]));
        for (std::size_t m = 0; m < c.stable_count(); ++m) {
            s2 = std::max(s2, std::abs(a.r2[k][m]));
            d2 = std::max(d2, std::abs(a.r2[k][m] - b.r2[k][m]));
        }
    }
    EXPECT_GT(s1, 0.0);
    EXPECT_LT(d1, 0.02 * s1);
    EXPECT_LT(d2, 0.02 * s2);
}

// Without noise and with X at its fixed point Phi is constant, so R1 reduces to
// -Pi_1 B(Phi*, Phi*) (e^{eps t} - 1)/eps.
TEST(Residual, ConstantStateQuadrature) {
    const double eps = 0.1;
    const auto c = triad_coeffs(eps, 0.0);
    double denom = 0.0;
    for (std::size_t n = 0; n < 2; ++n) denom -= c.b11[n] * c.fcross[n] / c.mterm(n).g;
    const double Xs = std::sqrt(eps / denom);
    std::vector<double> phi;
    for (std::size_t n = 0; n < 2; ++n) phi.push_back(c.b11[n] * Xs * Xs / c.mterm(n).g);
    const auto& B = *c.bss;
    double pbb = 0.0;
    for (std::size_t a = 1; a < 3; ++a)
        for (std::size_t b = 1; b < 3; ++b) pbb += B(0, a, b) * phi[a - 1] * phi[b - 1];
    const double T = 5.0;
    const auto path = path_for(c, T, 1e-3, 0);
    const auto tr = integrate_reduced(c, path, Xs, T, 1e-3);
    const auto r = residual(tr, c, path);
    EXPECT_NEAR(tr.states.back().X, Xs, 1e-6);
    const double expected = -pbb * std::expm1(eps * T) / eps;
    EXPECT_NEAR(r.r1.back(), expected, 1e-4 * std::abs(expected));
}

TEST(Apriori, GridSearch) {
    const auto r = apriori_from_ratios(std::vector<double>(100, 1.0), 0.1);
    EXPECT_GE(r.C, 1.0);
    EXPECT_LE(r.C, 1.0051);
    EXPECT_EQ(r.hits, 100u);
    std::vector<double> x;
    for (int i = 1; i <= 400; ++i) x.push_back(0.01 * i);
    EXPECT_GE(apriori_from_ratios(x, 0.05).C, apriori_from_ratios(x, 0.2).C);
    EXPECT_TRUE(std::isinf(apriori_from_ratios({}, 0.1).C));
}

TEST(Apriori, DeterministicBound) {
    const double eps = 0.05;
    ReducedEnsembleConfig cfg;
    cfg.samples = 4;
    cfg.dt = 1e-2;
    auto c = single_mode(eps, 0.0);
    const auto r = apriori_check(c, cfg);
    const double bound = std::max(1.0, std::sqrt(2.0 * eps + 1.0));
    for (double v : r.ratios) EXPECT_LE(v, bound * (1.0 + 1e-9));
    EXPECT_GE(r.wilson.lo, 0.0);
}
