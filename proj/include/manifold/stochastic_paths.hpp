#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "manifold/rng.hpp"
#include "manifold/stats.hpp"

namespace manifold {

inline constexpr std::size_t kDefaultMaxNodes = std::size_t{1} << 27;

/// Increments are rounded to this lattice so that every partial sum, and every
/// difference of partial sums, is exact in double precision.
inline constexpr double kPathQuantum = 0x1.0p-40;

/// Sampled Wiener path on a uniform grid. Node i sits at t_start + i*dt and the
/// node nearest t=0 holds exactly 0.
struct BrownianPath {
    double t_start = 0.0;
    double t_end = 0.0;
    double dt = 0.0;
    std::vector<double> values;
    std::uint64_t seed = 0;
    std::uint64_t stream_id = 0;
    std::size_t zero_index = 0;

    std::size_t size() const noexcept { return values.size(); }
    double time(std::size_t i) const noexcept { return t_start + static_cast<double>(i) * dt; }
    double dW(std::size_t i) const noexcept { return values[i + 1] - values[i]; }

    /// Grid index for t; t must lie within dt/2 of a node.
    std::size_t index_of(double t) const {
        const double x = (t - t_start) / dt;
        const double r = std::round(x);
        if (r < 0.0 || r > static_cast<double>(values.size() - 1))
            throw std::out_of_range("time " + std::to_string(t) + " outside path [" +
                                    std::to_string(t_start) + ", " + std::to_string(t_end) + "]");
        if (std::abs(x - r) > 0.5 + 1e-9)
            throw std::invalid_argument("time off grid");
        return static_cast<std::size_t>(r);
    }

    double at(double t) const { return values[index_of(t)]; }
};

/// Signed node offset from t=0 for each increment; the increment between node
/// offsets m and m+1 is keyed by m, so every path of a stream shares the
/// increments on the overlap of their grids.
inline BrownianPath sample_brownian(double t_start, double t_end, double dt, std::uint64_t seed,
                                    std::uint64_t stream_id,
                                    std::size_t max_nodes = kDefaultMaxNodes) {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("dt must be positive");
    if (!(t_end >= t_start)) throw std::invalid_argument("t_end must not precede t_start");
    const double span = (t_end - t_start) / dt;
    if (!(span + 1.0 <= static_cast<double>(max_nodes)))
        throw std::length_error("path grid exceeds node cap");
    const auto n = static_cast<std::size_t>(std::llround(span)) + 1;

    BrownianPath p;
    p.t_start = t_start;
    p.t_end = t_end;
    p.dt = dt;
    p.seed = seed;
    p.stream_id = stream_id;
    const double z = std::round(-t_start / dt);
    p.zero_index = static_cast<std::size_t>(std::clamp(z, 0.0, static_cast<double>(n - 1)));
    p.values.assign(n, 0.0);

    const CounterRng rng(seed, stream_id);
    const double sd = std::sqrt(dt);
    auto inc = [&](std::int64_t m) {
        return std::round(rng.normal(m) * sd / kPathQuantum) * kPathQuantum;
    };
    const auto i0 = static_cast<std::int64_t>(p.zero_index);
    for (std::size_t i = p.zero_index + 1; i < n; ++i)
        p.values[i] = p.values[i - 1] + inc(static_cast<std::int64_t>(i) - 1 - i0);
    for (std::size_t i = p.zero_index; i-- > 0;)
        p.values[i] = p.values[i + 1] - inc(static_cast<std::int64_t>(i) - i0);
    return p;
}

/// W(t) - W(s).
inline double increment(const BrownianPath& p, double s, double t) {
    return p.values[p.index_of(t)] - p.values[p.index_of(s)];
}

struct OuPath {
    const BrownianPath* base = nullptr;
    double sigma = 0.0;
    std::vector<double> values;
};

/// Pre-history needed before the stationary start is forgotten to double precision.
inline constexpr double kOuBurnIn = 40.0;

/// Stationary Ornstein-Uhlenbeck dr = -r dt + sigma dW on the grid of `path`.
/// Each step uses the exact decay and rescales dW so the per-step variance is exact.
/// With at least kOuBurnIn of pre-history the chain starts at 0 at the first node;
/// otherwise the first node is drawn from N(0, sigma^2/2).
inline OuPath ou_stationary(const BrownianPath& path, double sigma, bool start_at_zero = false) {
    if (sigma < 0.0) throw std::invalid_argument("sigma must be non-negative");
    OuPath z{&path, sigma, std::vector<double>(path.size(), 0.0)};
    if (path.size() == 0) return z;
    const double h = path.dt;
    const double decay = std::exp(-h);
    const double scale = sigma * std::sqrt(-std::expm1(-2.0 * h) / (2.0 * h));
    const bool long_prehistory = path.time(0) <= -kOuBurnIn;
    if (!start_at_zero && !long_prehistory) {
        const CounterRng rng(path.seed, CounterRng::mix(path.stream_id) ^ 0x5deece66dULL);
        z.values[0] = rng.normal(0) * sigma / std::sqrt(2.0);
    }
    for (std::size_t i = 0; i + 1 < path.size(); ++i)
        z.values[i + 1] = decay * z.values[i] + scale * path.dW(i);
    return z;
}

/// gamma = sqrt(-2 T ln(1 - chi)).
inline double sup_bound_gamma(double T, double chi) {
    if (!(T > 0.0)) throw std::invalid_argument("T must be positive");
    if (!(chi > 0.0 && chi <= 1.0)) throw std::invalid_argument("chi must lie in (0,1]");
    return std::sqrt(-2.0 * T * std::log1p(-chi));
}

/// Level that P(sup_{[0,T]} |W| >= gamma) <= 2 exp(-gamma^2/(2T)) turns into a
/// (1-chi)-probability bound: gamma = sqrt(2 T ln(2/chi)).
inline double sup_bound_gamma_reflection(double T, double chi) {
    if (!(T > 0.0)) throw std::invalid_argument("T must be positive");
    if (!(chi > 0.0 && chi <= 1.0)) throw std::invalid_argument("chi must lie in (0,1]");
    return std::sqrt(2.0 * T * std::log(2.0 / chi));
}

struct SupBoundReport {
    double gamma = 0.0;
    std::size_t hits = 0;
    std::size_t n = 0;
    double empirical = 0.0;
    Interval wilson;
    bool holds = false;  ///< Wilson upper bound reaches 1 - chi
};

/// Monte Carlo estimate of P(sqrt(eps) sup_{[0,T/eps]} |W| <= gamma).
inline SupBoundReport check_sup_bound(double eps, double T, double chi, double gamma,
                                      std::size_t n_paths, double dt, std::uint64_t seed) {
    if (!(eps > 0.0)) throw std::invalid_argument("eps must be positive");
    SupBoundReport r;
    r.gamma = gamma;
    r.n = n_paths;
    const double s = std::sqrt(eps);
    for (std::size_t k = 0; k < n_paths; ++k) {
        const auto p = sample_brownian(0.0, T / eps, dt, seed, k);
        double m = 0.0;
        for (double w : p.values) m = std::max(m, std::abs(w));
        if (s * m <= gamma) ++r.hits;
    }
    r.empirical = n_paths ? static_cast<double>(r.hits) / static_cast<double>(n_paths) : 0.0;
    r.wilson = wilson_interval(r.hits, r.n);
    r.holds = r.wilson.hi >= 1.0 - chi;
    return r;
}

}  // namespace manifold
