#include <gtest/gtest.h>

#include <cmath>

#include "manifold/rng.hpp"
#include "manifold/stats.hpp"

using namespace manifold;

TEST(Wilson, KnownValues) {
    const auto w = wilson_interval(90, 100);
    EXPECT_NEAR(w.lo, 0.8256, 1e-4);
    EXPECT_NEAR(w.hi, 0.9448, 1e-4);
    const auto all = wilson_interval(100, 100);
    EXPECT_DOUBLE_EQ(all.hi, 1.0);
    EXPECT_LT(all.lo, 1.0);
    const auto none = wilson_interval(0, 0);
    EXPECT_EQ(none.lo, 0.0);
    EXPECT_EQ(none.hi, 1.0);
}

TEST(Quantile, Interpolates) {
    const std::vector<double> x{4.0, 1.0, 3.0, 2.0};
    EXPECT_DOUBLE_EQ(median(x), 2.5);
    EXPECT_DOUBLE_EQ(quantile(x, 0.0), 1.0);
    EXPECT_DOUBLE_EQ(quantile(x, 1.0), 4.0);
    EXPECT_THROW(quantile({}, 0.5), std::invalid_argument);
    EXPECT_THROW(quantile(x, 1.5), std::invalid_argument);
}

TEST(FitLoglog, IdentityAndPowerLaw) {
    const std::vector<double> x{1.0, 2.0, 4.0, 8.0};
    const auto f = fit_loglog(x, x);
    EXPECT_NEAR(f.slope, 1.0, 1e-12);
    EXPECT_NEAR(f.intercept, 0.0, 1e-12);
    EXPECT_NEAR(f.r2, 1.0, 1e-12);
    std::vector<double> y;
    for (double v : x) y.push_back(3.0 * std::pow(v, 1.5));
    const auto g = fit_loglog(x, y);
    EXPECT_NEAR(g.slope, 1.5, 1e-12);
    EXPECT_NEAR(g.intercept, std::log(3.0), 1e-12);
}

TEST(FitLoglog, NoisyPowerLaw) {
    const CounterRng rng(3, 0);
    std::vector<double> x, y;
    for (int i = 0; i < 8; ++i) {
        x.push_back(std::pow(2.0, i));
        y.push_back(std::pow(x.back(), 0.5) * (1.0 + 0.01 * rng.normal(static_cast<std::int64_t>(i))));
    }
    const auto f = fit_loglog(x, y);
    EXPECT_NEAR(f.slope, 0.5, 0.05);
    EXPECT_GT(f.r2, 0.99);
}

TEST(FitLoglog, Errors) {
    EXPECT_THROW(fit_loglog({1.0, 2.0}, {1.0, 2.0}), std::invalid_argument);
    EXPECT_THROW(fit_loglog({1.0, 2.0, 0.0}, {1.0, 2.0, 3.0}), std::invalid_argument);
    EXPECT_THROW(fit_loglog({1.0, 2.0, 3.0}, {1.0, -2.0, 3.0}), std::invalid_argument);
    EXPECT_THROW(fit_loglog({1.0, 2.0, 3.0}, {1.0, 2.0}), std::invalid_argument);
}

TEST(Kde, NormalizedAndSymmetric) {
    const CounterRng rng(5, 0);
    std::vector<double> x;
    for (std::int64_t i = 0; i < 500; ++i) {
        const double v = std::abs(rng.normal(i)) + 1.0;
        x.push_back(v);
        x.push_back(-v);
    }
    const double h = silverman_bandwidth(x);
    EXPECT_GT(h, 0.0);
    std::vector<double> grid;
    for (int i = -400; i <= 400; ++i) grid.push_back(0.02 * i);
    const auto d = kde(x, grid, h);
    double area = 0.0;
    for (std::size_t i = 0; i + 1 < grid.size(); ++i) area += 0.01 * (d[i] + d[i + 1]);
    EXPECT_NEAR(area, 1.0, 1e-3);
    for (std::size_t i = 0; i < grid.size(); ++i) EXPECT_NEAR(d[i], d[grid.size() - 1 - i], 1e-12);
    EXPECT_GT(std::abs(kde_mode(grid, d)), 0.5);
    EXPECT_THROW(kde(x, grid, 0.0), std::invalid_argument);
}

TEST(Ks, UniformSample) {
    std::vector<double> x;
    for (int i = 0; i < 100; ++i) x.push_back((i + 0.5) / 100.0);
    EXPECT_NEAR(ks_distance(x, [](double v) { return v; }), 0.005, 1e-12);
    EXPECT_NEAR(ks_distance({0.5}, [](double v) { return v; }), 0.5, 1e-12);
}

TEST(Autocorrelation, ConstantAndAlternating) {
    const auto c = autocorrelation(std::vector<double>(10, 2.0), 3);
    EXPECT_EQ(c[0], 1.0);
    EXPECT_EQ(c[1], 0.0);
    std::vector<double> alt;
    for (int i = 0; i < 1000; ++i) alt.push_back(i % 2 ? 1.0 : -1.0);
    const auto a = autocorrelation(alt, 2);
    EXPECT_NEAR(a[1], -1.0, 2e-3);
    EXPECT_NEAR(a[2], 1.0, 3e-3);
    EXPECT_THROW(autocorrelation({1.0, 2.0}, 5), std::invalid_argument);
}
