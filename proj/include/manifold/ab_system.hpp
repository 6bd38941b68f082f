#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "manifold/ensemble.hpp"
#include "manifold/mterm.hpp"
#include "manifold/sde.hpp"
#include "manifold/stats.hpp"
#include "manifold/stochastic_paths.hpp"

namespace manifold {

/// dA = (lambda A + A B) dt,  dB = (kappa B - A^2) dt + sigma B o dW.
struct AbParams {
    double lambda = 0.1;
    double kappa = -1.0;
    double sigma = 0.3;
    double A0 = 0.3;
    double B0 = -0.075;

    void validate() const {
        if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be positive");
        if (!(kappa < 0.0)) throw std::invalid_argument("kappa must be negative");
        if (!(sigma >= 0.0)) throw std::invalid_argument("sigma must be non-negative");
        if (!(2.0 * lambda - kappa > 0.0)) throw std::invalid_argument("2 lambda - kappa must be positive");
    }

    /// The M-term of the closure: decay 2 lambda - kappa, noise entering with +sigma.
    MTermParams mterm() const { return {2.0 * lambda - kappa, -sigma}; }
};

inline constexpr double kAbBlowUpCap = 1e3;

struct AbBlowUp : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct AbTrajectory {
    std::vector<double> times;
    std::vector<double> A;
    std::vector<double> B;  ///< full system: B; non-Markov closure: M; exact closure: I
};

enum class Closure { deterministic, nonmarkov, exact };

inline Closure closure_from_string(const std::string& s) {
    if (s == "deterministic") return Closure::deterministic;
    if (s == "nonmarkov") return Closure::nonmarkov;
    if (s == "exact") return Closure::exact;
    throw std::invalid_argument("unknown closure kind '" + s + "'");
}

namespace detail {

inline std::size_t ab_steps(const BrownianPath& path, double T, double dt, std::size_t& stride) {
    const double r = dt / path.dt;
    const double k = std::round(r);
    if (k < 1.0 || std::abs(r - k) > 1e-9 * std::max(1.0, k))
        throw std::invalid_argument("dt must be a positive integer multiple of the path step");
    stride = static_cast<std::size_t>(k);
    const auto steps = static_cast<std::size_t>(std::llround(T / dt));
    if (path.zero_index + steps * stride > path.size() - 1)
        throw std::invalid_argument("path too short for requested horizon");
    return steps;
}

inline void guard(double A, double t, double cap) {
    if (!(std::abs(A) <= cap))
        throw AbBlowUp("|A| exceeded " + std::to_string(cap) + " at t=" + std::to_string(t));
}

}  // namespace detail

/// Heun-Stratonovich integration of the full two-mode system from the path's t=0 node.
inline AbTrajectory simulate_ab(const AbParams& p, const BrownianPath& path, double T, double dt,
                                double cap = kAbBlowUpCap) {
    p.validate();
    std::size_t stride = 1;
    const std::size_t steps = detail::ab_steps(path, T, dt, stride);
    AbTrajectory tr;
    tr.times.reserve(steps + 1);
    tr.A.reserve(steps + 1);
    tr.B.reserve(steps + 1);
    std::vector<double> y{p.A0, p.B0};
    HeunWorkspace ws;
    auto f = [&](const std::vector<double>& v, std::vector<double>& o) {
        o[0] = p.lambda * v[0] + v[0] * v[1];
        o[1] = p.kappa * v[1] - v[0] * v[0];
    };
    auto G = [&](const std::vector<double>& v, std::vector<double>& o) {
        o[0] = 0.0;
        o[1] = p.sigma * v[1];
    };
    const std::size_t i0 = path.zero_index;
    for (std::size_t k = 0;; ++k) {
        const std::size_t i = i0 + k * stride;
        tr.times.push_back(path.time(i));
        tr.A.push_back(y[0]);
        tr.B.push_back(y[1]);
        detail::guard(y[0], path.time(i), cap);
        if (k == steps) break;
        heun_step(y, dt, path.values[i + stride] - path.values[i], f, G, ws);
    }
    return tr;
}

/// I(t) = -B0 e^{kappa t + sigma W_t} + int_0^t e^{kappa(t-s) + sigma(W_t - W_s)} A(s)^2 ds
/// for A given on consecutive path nodes (stride apart) from t=0, by the
/// one-step recursion with trapezoidal pieces. The anchor term reproduces the
/// memory before t=0 that is consistent with B(0) = B0.
inline std::vector<double> memory_integral_series(const AbParams& p, const BrownianPath& path,
                                                  const std::vector<double>& A, std::size_t stride = 1) {
    std::vector<double> I(A.size());
    if (A.empty()) return I;
    const double h = path.dt * static_cast<double>(stride);
    I[0] = -p.B0;
    for (std::size_t k = 0; k + 1 < A.size(); ++k) {
        const std::size_t i = path.zero_index + k * stride;
        const double f = std::exp(p.kappa * h + p.sigma * (path.values[i + stride] - path.values[i]));
        I[k + 1] = f * I[k] + 0.5 * h * (f * A[k] * A[k] + A[k + 1] * A[k + 1]);
    }
    return I;
}

/// A under one of the three closures; the second series carries M (non-Markov)
/// or the memory integral I (exact), and is empty for the deterministic closure.
inline AbTrajectory ab_closure(Closure kind, const AbParams& p, const BrownianPath& path, double T, double dt,
                               double tol = 1e-8, double cap = kAbBlowUpCap) {
    p.validate();
    std::size_t stride = 1;
    const std::size_t steps = detail::ab_steps(path, T, dt, stride);
    const std::size_t i0 = path.zero_index;
    AbTrajectory tr;
    tr.times.reserve(steps + 1);
    tr.A.reserve(steps + 1);
    const double c = 1.0 / (2.0 * p.lambda - p.kappa);

    switch (kind) {
        case Closure::deterministic: {
            double a = p.A0;
            auto f = [&](double x) { return p.lambda * x - c * x * x * x; };
            for (std::size_t k = 0;; ++k) {
                tr.times.push_back(path.time(i0 + k * stride));
                tr.A.push_back(a);
                detail::guard(a, tr.times.back(), cap);
                if (k == steps) break;
                const double pred = a + dt * f(a);
                a += 0.5 * dt * (f(a) + f(pred));
            }
            break;
        }
        case Closure::nonmarkov: {
            const MTermParams mp = p.mterm();
            std::vector<double> y{p.A0, mterm_at(mp, path, i0, tol)};
            HeunWorkspace ws;
            auto f = [&](const std::vector<double>& v, std::vector<double>& o) {
                o[0] = p.lambda * v[0] - v[1] * v[0] * v[0] * v[0];
                o[1] = 1.0 - mp.g * v[1];
            };
            auto G = [&](const std::vector<double>& v, std::vector<double>& o) {
                o[0] = 0.0;
                o[1] = -mp.sigma_eff * v[1];
            };
            for (std::size_t k = 0;; ++k) {
                const std::size_t i = i0 + k * stride;
                tr.times.push_back(path.time(i));
                tr.A.push_back(y[0]);
                tr.B.push_back(y[1]);
                detail::guard(y[0], tr.times.back(), cap);
                if (k == steps) break;
                heun_step(y, dt, path.values[i + stride] - path.values[i], f, G, ws);
            }
            break;
        }
        case Closure::exact: {
            double a = p.A0;
            double I = -p.B0;
            for (std::size_t k = 0;; ++k) {
                const std::size_t i = i0 + k * stride;
                tr.times.push_back(path.time(i));
                tr.A.push_back(a);
                tr.B.push_back(I);
                detail::guard(a, tr.times.back(), cap);
                if (k == steps) break;
                const double fdec = std::exp(p.kappa * dt + p.sigma * (path.values[i + stride] - path.values[i]));
                const double f0 = (p.lambda - I) * a;
                const double a_pred = a + dt * f0;
                const double I_pred = fdec * I + 0.5 * dt * (fdec * a * a + a_pred * a_pred);
                const double a_next = a + 0.5 * dt * (f0 + (p.lambda - I_pred) * a_pred);
                I = fdec * I + 0.5 * dt * (fdec * a * a + a_next * a_next);
                a = a_next;
            }
            break;
        }
    }
    return tr;
}

inline double rmse(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.empty()) throw std::invalid_argument("rmse needs equal non-empty series");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s / static_cast<double>(a.size()));
}

struct AbCompareConfig {
    std::size_t samples = 200;
    double T = 100.0;
    double dt = 1e-3;
    double tol = 1e-8;
    std::uint64_t seed = 1;
    std::size_t workers = 1;
    std::vector<double> snapshot_times;
    std::size_t snapshot_points = 41;
};

struct AbCompareRow {
    std::size_t sample = 0;
    double rmse_det = 0.0;
    double rmse_nonmarkov = 0.0;
    double rmse_exact = 0.0;
    std::string status = "ok";
};

struct AbSnapshotPoint {
    double t = 0.0;
    double A = 0.0;
    double B = 0.0;
};

struct AbSeriesRow {
    double t, A_full, B_full, A_det, A_nonmarkov, A_exact, M;
};

struct AbCompareReport {
    std::vector<AbCompareRow> rows;
    std::vector<AbSeriesRow> series;  ///< sample 0
    std::vector<AbSnapshotPoint> manifold;  ///< B = -M(t) A^2 on sample 0 at the snapshot times
    std::vector<AbSnapshotPoint> full_points;  ///< (A, B) of the full system at the same times
};

inline BrownianPath ab_path(const AbParams& p, const AbCompareConfig& cfg, std::uint64_t stream) {
    const double T_pre = mterm_prehistory(p.mterm(), cfg.tol);
    return sample_brownian(-(std::ceil(T_pre / cfg.dt) + 1.0) * cfg.dt, cfg.T, cfg.dt, cfg.seed, stream);
}

inline AbCompareReport ab_compare(const AbParams& p, const AbCompareConfig& cfg) {
    p.validate();
    AbCompareReport rep;
    rep.rows.resize(cfg.samples);
    parallel_for(cfg.samples, cfg.workers, [&](std::size_t k) {
        AbCompareRow& row = rep.rows[k];
        row.sample = k;
        try {
            const auto path = ab_path(p, cfg, k);
            const auto full = simulate_ab(p, path, cfg.T, cfg.dt);
            const auto det = ab_closure(Closure::deterministic, p, path, cfg.T, cfg.dt, cfg.tol);
            const auto nm = ab_closure(Closure::nonmarkov, p, path, cfg.T, cfg.dt, cfg.tol);
            const auto ex = ab_closure(Closure::exact, p, path, cfg.T, cfg.dt, cfg.tol);
            row.rmse_det = rmse(det.A, full.A);
            row.rmse_nonmarkov = rmse(nm.A, full.A);
            row.rmse_exact = rmse(ex.A, full.A);
            if (k == 0) {
                for (std::size_t i = 0; i < full.A.size(); ++i)
                    rep.series.push_back({full.times[i], full.A[i], full.B[i], det.A[i], nm.A[i], ex.A[i], nm.B[i]});
                double amax = 0.0;
                for (double a : full.A) amax = std::max(amax, std::abs(a));
                for (double ts : cfg.snapshot_times) {
                    const auto idx = static_cast<std::size_t>(std::llround(ts / cfg.dt));
                    if (idx >= full.A.size()) continue;
                    rep.full_points.push_back({full.times[idx], full.A[idx], full.B[idx]});
                    const std::size_t n = std::max<std::size_t>(2, cfg.snapshot_points);
                    for (std::size_t j = 0; j < n; ++j) {
                        const double a = -amax + 2.0 * amax * static_cast<double>(j) / static_cast<double>(n - 1);
                        rep.manifold.push_back({full.times[idx], a, -nm.B[idx] * a * a});
                    }
                }
            }
        } catch (const std::exception& e) {
            row.status = std::string("failed: ") + e.what();
        }
    });
    return rep;
}

}  // namespace manifold
