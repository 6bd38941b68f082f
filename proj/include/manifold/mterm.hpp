#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <vector>

#include "manifold/stats.hpp"
#include "manifold/stochastic_paths.hpp"

namespace manifold {

/// Stationary solution of dM = (1 - g M) dt - sigma_eff M o dW,
/// M(t) = int_{-inf}^0 exp(g s + sigma_eff (W(t+s) - W(t))) ds.
struct MTermParams {
    double g = 1.0;
    double sigma_eff = 0.0;
};

struct MTermStats {
    std::optional<double> mean;
    std::optional<double> variance;
    double acf_rate = 0.0;
};

struct LogNormalParams {
    double mu = 0.0;
    double Sigma = 0.0;
    double kappa = 1.0;
    double eta = 0.0;
};

inline void require_nonresonant(const MTermParams& p) {
    if (!(p.g > 0.0)) throw std::domain_error("M-term requires g > 0");
}

inline bool mterm_has_mean(const MTermParams& p) { return p.sigma_eff * p.sigma_eff < 2.0 * p.g; }
inline bool mterm_has_variance(const MTermParams& p) { return p.sigma_eff * p.sigma_eff < p.g; }

inline MTermStats mterm_moments(const MTermParams& p) {
    require_nonresonant(p);
    const double s2 = p.sigma_eff * p.sigma_eff;
    MTermStats st;
    st.acf_rate = p.g - 0.5 * s2;
    if (mterm_has_mean(p)) st.mean = 2.0 / (2.0 * p.g - s2);
    if (mterm_has_variance(p))
        st.variance = 2.0 * s2 / ((2.0 * p.g - s2) * (2.0 * p.g - s2) * (p.g - s2));
    return st;
}

inline double mterm_autocorrelation(const MTermParams& p, double lag) {
    require_nonresonant(p);
    if (!mterm_has_variance(p)) throw std::domain_error("autocorrelation needs |sigma_eff| < sqrt(g)");
    return std::exp(-(p.g - 0.5 * p.sigma_eff * p.sigma_eff) * std::abs(lag));
}

/// Pre-history length ln(1/tol)/g after which the deterministic envelope is below tol/g.
inline double mterm_prehistory(const MTermParams& p, double tol) {
    require_nonresonant(p);
    if (!(tol > 0.0 && tol < 1.0)) throw std::invalid_argument("tol must lie in (0,1)");
    return std::log(1.0 / tol) / p.g;
}

/// Trapezoidal quadrature of the truncated stationary integral at grid node `node`.
inline double mterm_at(const MTermParams& p, const BrownianPath& path, std::size_t node, double tol) {
    const double T_pre = mterm_prehistory(p, tol);
    const auto n_pre = static_cast<std::size_t>(std::ceil(T_pre / path.dt - 1e-9));
    if (node >= path.size()) throw std::out_of_range("node outside path");
    if (node < n_pre) throw std::invalid_argument("insufficient pre-history for M-term initialization");
    const double h = path.dt;
    const double w0 = path.values[node];
    double sum = 0.0;
    for (std::size_t m = 0; m <= n_pre; ++m) {
        const double s = -static_cast<double>(m) * h;
        const double v = std::exp(p.g * s + p.sigma_eff * (path.values[node - m] - w0));
        sum += (m == 0 || m == n_pre) ? 0.5 * v : v;
    }
    return sum * h;
}

inline double mterm_init(const MTermParams& p, const BrownianPath& prehistory, double tol) {
    return mterm_at(p, prehistory, prehistory.zero_index, tol);
}

struct MTermDiagnostics {
    std::size_t halvings = 0;
};

/// Heun step of dM = (1 - gM) dt - sigma_eff M o dW. A step that would leave
/// M <= 0 is redone as two half steps with the increment split evenly.
inline double mterm_step(const MTermParams& p, double m, double dW, double dt,
                         MTermDiagnostics* diag = nullptr, int depth = 0) {
    if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
    auto f = [&](double x) { return 1.0 - p.g * x; };
    auto G = [&](double x) { return -p.sigma_eff * x; };
    const double pred = m + f(m) * dt + G(m) * dW;
    const double next = m + 0.5 * (f(m) + f(pred)) * dt + 0.5 * (G(m) + G(pred)) * dW;
    if (next > 0.0 || depth >= 30) return next;
    if (diag) ++diag->halvings;
    const double half = mterm_step(p, m, 0.5 * dW, 0.5 * dt, diag, depth + 1);
    return mterm_step(p, half, 0.5 * dW, 0.5 * dt, diag, depth + 1);
}

/// M on nodes [from, to] of `path`: quadrature start at `from`, Heun steps after.
inline std::vector<double> mterm_evolve(const MTermParams& p, const BrownianPath& path, std::size_t from,
                                        std::size_t to, double tol, MTermDiagnostics* diag = nullptr) {
    if (to < from || to >= path.size()) throw std::out_of_range("bad node range");
    std::vector<double> m(to - from + 1);
    m[0] = mterm_at(p, path, from, tol);
    for (std::size_t i = from; i < to; ++i)
        m[i - from + 1] = mterm_step(p, m[i - from], path.dW(i), path.dt, diag);
    return m;
}

/// One step of the exact recursion of the stationary integral,
/// M(t+h) = e^{-gh - sigma_eff dW} M(t) + int_t^{t+h} e^{g(r-t-h) + sigma_eff (W_r - W_{t+h})} dr,
/// with the new piece by the trapezoidal rule.
inline double mterm_quadrature_step(const MTermParams& p, double m, double dW, double h) {
    const double decay = std::exp(-p.g * h - p.sigma_eff * dW);
    return decay * m + 0.5 * h * (decay + 1.0);
}

inline std::vector<double> mterm_quadrature_series(const MTermParams& p, const BrownianPath& path,
                                                   std::size_t from, std::size_t to, double tol) {
    if (to < from || to >= path.size()) throw std::out_of_range("bad node range");
    std::vector<double> m(to - from + 1);
    m[0] = mterm_at(p, path, from, tol);
    for (std::size_t i = from; i < to; ++i)
        m[i - from + 1] = mterm_quadrature_step(p, m[i - from], path.dW(i), path.dt);
    return m;
}

/// Log-normal fit of the scaled variable gM.
inline LogNormalParams lognormal_approx(const MTermParams& p) {
    require_nonresonant(p);
    if (!mterm_has_variance(p)) throw std::domain_error("log-normal fit needs |sigma_eff| < sqrt(g)");
    const double s = p.sigma_eff * p.sigma_eff / p.g;
    LogNormalParams ln;
    ln.kappa = 2.0 / (2.0 - s);
    ln.eta = std::sqrt(2.0 * s / ((2.0 - s) * (2.0 - s) * (1.0 - s)));
    const double r = ln.eta / ln.kappa;
    ln.Sigma = std::sqrt(std::log1p(r * r));
    ln.mu = std::log(ln.kappa) - 0.5 * ln.Sigma * ln.Sigma;
    return ln;
}

inline double lognormal_pdf(const LogNormalParams& ln, double x) {
    if (!(x > 0.0) || ln.Sigma == 0.0) return 0.0;
    const double z = (std::log(x) - ln.mu) / ln.Sigma;
    return std::exp(-0.5 * z * z) / (x * ln.Sigma * std::sqrt(2.0 * std::numbers::pi));
}

inline double lognormal_cdf(const LogNormalParams& ln, double x) {
    if (!(x > 0.0)) return 0.0;
    if (ln.Sigma == 0.0) return std::log(x) >= ln.mu ? 1.0 : 0.0;
    return 0.5 * std::erfc(-(std::log(x) - ln.mu) / (ln.Sigma * std::numbers::sqrt2));
}

/// Log-normal approximation expressed for M itself (density of M = g f(g x)).
inline double mterm_lognormal_pdf(const MTermParams& p, double x) {
    return p.g * lognormal_pdf(lognormal_approx(p), p.g * x);
}

inline double mterm_lognormal_cdf(const MTermParams& p, double x) {
    return lognormal_cdf(lognormal_approx(p), p.g * x);
}

/// kappa = max_i E[M_i] / chi; Markov's inequality gives P(M_i < kappa) >= 1 - chi for each i.
inline double chebyshev_bound(const std::vector<MTermParams>& list, double chi) {
    if (list.empty()) throw std::invalid_argument("empty parameter list");
    if (!(chi > 0.0 && chi < 1.0)) throw std::invalid_argument("chi must lie in (0,1)");
    double mmax = 0.0;
    for (const auto& p : list) {
        const auto st = mterm_moments(p);
        if (!st.mean) throw std::domain_error("M-term mean undefined for an entry");
        mmax = std::max(mmax, *st.mean);
    }
    return mmax / chi;
}

struct ProbabilityReport {
    double threshold = 0.0;
    std::size_t hits = 0;
    std::size_t n = 0;
    double empirical = 0.0;
    Interval wilson;
};

/// Fraction of stationary draws (one shared pre-history per sample) with every M_i < kappa.
inline ProbabilityReport check_chebyshev(const std::vector<MTermParams>& list, double chi, std::size_t n,
                                         double dt, double tol, std::uint64_t seed) {
    ProbabilityReport r;
    r.threshold = chebyshev_bound(list, chi);
    r.n = n;
    double T_pre = 0.0;
    for (const auto& p : list) T_pre = std::max(T_pre, mterm_prehistory(p, tol));
    for (std::size_t k = 0; k < n; ++k) {
        const auto path = sample_brownian(-T_pre - 2.0 * dt, 0.0, dt, seed, k);
        bool all = true;
        for (const auto& p : list) all = all && mterm_init(p, path, tol) < r.threshold;
        if (all) ++r.hits;
    }
    r.empirical = n ? static_cast<double>(r.hits) / static_cast<double>(n) : 0.0;
    r.wilson = wilson_interval(r.hits, n);
    return r;
}

}  // namespace manifold
