#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "manifold/ensemble.hpp"
#include "manifold/mterm.hpp"
#include "manifold/sde.hpp"
#include "manifold/stats.hpp"
#include "manifold/stochastic_paths.hpp"

namespace manifold {

/// Dense B^l_{nu mu} over n modes; index 0 is the unstable mode e_1.
struct CouplingTensor {
    std::size_t n = 0;
    std::vector<double> data;

    CouplingTensor() = default;
    explicit CouplingTensor(std::size_t modes) : n(modes), data(modes * modes * modes, 0.0) {}

    double operator()(std::size_t l, std::size_t nu, std::size_t mu) const { return data[(l * n + nu) * n + mu]; }
    double& operator()(std::size_t l, std::size_t nu, std::size_t mu) { return data[(l * n + nu) * n + mu]; }

    /// Sets B^l_{nu mu} = v and B^mu_{nu l} = -v.
    void set_antisymmetric(std::size_t nu, std::size_t mu, std::size_t l, double v) {
        (*this)(l, nu, mu) = v;
        (*this)(mu, nu, l) = -v;
    }
};

struct ReducedCoeffs {
    double epsilon = 0.0;
    double sigma = 0.0;
    std::vector<double> stable_eigs;  ///< beta_n, n = 2..N
    std::vector<double> b11;          ///< B^n_{11}
    std::vector<double> fcross;       ///< B^1_{1n} + B^1_{n1}
    std::optional<CouplingTensor> bss;

    std::size_t stable_count() const noexcept { return stable_eigs.size(); }

    /// Decay rate of the M-term attached to stable mode n (0-based).
    MTermParams mterm(std::size_t n) const { return {2.0 * epsilon - stable_eigs[n], sigma}; }

    double g_max() const {
        double g = 0.0;
        for (std::size_t n = 0; n < stable_count(); ++n) g = std::max(g, mterm(n).g);
        return g;
    }

    void validate() const {
        const std::size_t N = stable_eigs.size();
        if (N == 0) throw std::invalid_argument("at least one stable mode required");
        if (b11.size() != N || fcross.size() != N)
            throw std::invalid_argument("b11/fcross length must match stable_eigs");
        for (double b : stable_eigs)
            if (!(b < 0.0)) throw std::invalid_argument("stable eigenvalues must be negative");
        if (bss && bss->n != N + 1) throw std::invalid_argument("coupling tensor size mismatch");
    }
};

/// Default step min(1e-3, 0.01/g_max).
inline double default_dt(const ReducedCoeffs& c) { return std::min(1e-3, 0.01 / c.g_max()); }

struct DissipationReport {
    bool ok = false;
    std::vector<double> products;
};

inline DissipationReport check_dissipation(const ReducedCoeffs& c) {
    DissipationReport r;
    bool all = true, strict = false;
    for (std::size_t n = 0; n < c.b11.size() && n < c.fcross.size(); ++n) {
        const double p = c.b11[n] * c.fcross[n];
        r.products.push_back(p);
        all = all && p <= 0.0;
        strict = strict || p < 0.0;
    }
    r.ok = all && strict;
    return r;
}

/// Three-mode energy-conserving system (one unstable, two stable modes) whose
/// tensor feeds every term of the residual.
inline ReducedCoeffs triad_coeffs(double epsilon, double sigma) {
    CouplingTensor B(3);
    B.set_antisymmetric(0, 0, 1, -1.0);
    B.set_antisymmetric(0, 0, 2, -0.5);
    B.set_antisymmetric(0, 1, 2, 0.3);
    B.set_antisymmetric(1, 0, 1, 0.2);
    B.set_antisymmetric(1, 0, 2, 0.4);
    B.set_antisymmetric(1, 1, 2, 0.25);
    B.set_antisymmetric(2, 0, 1, -0.3);
    B.set_antisymmetric(2, 0, 2, 0.1);
    B.set_antisymmetric(2, 1, 2, 0.2);
    ReducedCoeffs c;
    c.epsilon = epsilon;
    c.sigma = sigma;
    c.stable_eigs = {-1.0, -2.0};
    for (std::size_t n = 1; n < 3; ++n) {
        c.b11.push_back(B(n, 0, 0));
        c.fcross.push_back(B(0, 0, n) + B(0, n, 0));
    }
    c.bss = B;
    return c;
}

struct ReducedState {
    double X = 0.0;
    std::vector<double> phi;
    std::vector<double> m;
};

struct ReducedTrajectory {
    std::vector<double> times;
    std::vector<ReducedState> states;
    std::size_t first_node = 0;  ///< path node of states[0]
    std::size_t node_stride = 1; ///< path nodes between consecutive stored states
    MTermDiagnostics diag;
};

inline double cubic_coefficient(const ReducedCoeffs& c, const std::vector<double>& m) {
    double s = 0.0;
    for (std::size_t n = 0; n < c.stable_count(); ++n) s += c.b11[n] * m[n] * c.fcross[n];
    return s;
}

inline double fc_of(const ReducedCoeffs& c, const std::vector<double>& phi) {
    double s = 0.0;
    for (std::size_t n = 0; n < c.stable_count(); ++n) s += c.fcross[n] * phi[n];
    return s;
}

namespace detail {

inline std::size_t stride_for(const BrownianPath& path, double dt) {
    const double r = dt / path.dt;
    const double k = std::round(r);
    if (k < 1.0 || std::abs(r - k) > 1e-9 * std::max(1.0, k))
        throw std::invalid_argument("dt must be a positive integer multiple of the path step");
    return static_cast<std::size_t>(k);
}

/// Packs (X, Phi, M) into one vector for the joint Heun step.
struct ReducedSystem {
    const ReducedCoeffs& c;
    std::size_t N;

    void drift(const std::vector<double>& y, std::vector<double>& out) const {
        const double X = y[0];
        double cub = 0.0, fc = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
            cub += c.b11[n] * y[1 + N + n] * c.fcross[n];
            fc += c.fcross[n] * y[1 + n];
        }
        out[0] = c.epsilon * X + cub * X * X * X;
        for (std::size_t n = 0; n < N; ++n) {
            const double phi = y[1 + n];
            out[1 + n] = c.stable_eigs[n] * phi + c.b11[n] * X * X + 2.0 * phi * fc;
            out[1 + N + n] = 1.0 - c.mterm(n).g * y[1 + N + n];
        }
    }

    void diffusion(const std::vector<double>& y, std::vector<double>& out) const {
        for (std::size_t i = 0; i < 1 + N; ++i) out[i] = c.sigma * y[i];
        for (std::size_t n = 0; n < N; ++n) out[1 + N + n] = -c.sigma * y[1 + N + n];
    }

    bool positive_m(const std::vector<double>& y) const {
        for (std::size_t n = 0; n < N; ++n)
            if (!(y[1 + N + n] > 0.0)) return false;
        return true;
    }

    void step(std::vector<double>& y, double h, double dW, HeunWorkspace& ws, MTermDiagnostics& d,
              int depth = 0) const {
        std::vector<double> trial = y;
        heun_step(
            trial, h, dW, [&](const auto& v, auto& o) { drift(v, o); },
            [&](const auto& v, auto& o) { diffusion(v, o); }, ws);
        if (positive_m(trial) || depth >= 30) {
            y.swap(trial);
            return;
        }
        ++d.halvings;
        step(y, 0.5 * h, 0.5 * dW, ws, d, depth + 1);
        step(y, 0.5 * h, 0.5 * dW, ws, d, depth + 1);
    }
};

}  // namespace detail

/// Pre-history a path must carry before t=0 for the M-term initialization.
inline double reduced_prehistory(const ReducedCoeffs& c, double tol) {
    double T = 0.0;
    for (std::size_t n = 0; n < c.stable_count(); ++n) T = std::max(T, mterm_prehistory(c.mterm(n), tol));
    return T;
}

/// Co-evolves X (cubic equation with M-term coefficient), the M_n, and the
/// Markovianized Phi_n on one path, starting at the path's t=0 node with
/// Phi_n(0) = B^n_11 M_n(0) X0^2. States are stored every `decimation` steps.
inline ReducedTrajectory integrate_reduced(const ReducedCoeffs& c, const BrownianPath& path, double X0,
                                           double T, double dt, double tol = 1e-8,
                                           std::size_t decimation = 1) {
    c.validate();
    if (!check_dissipation(c).ok) throw std::invalid_argument("dissipation condition violated");
    if (!(T >= 0.0)) throw std::invalid_argument("T must be non-negative");
    if (decimation == 0) throw std::invalid_argument("decimation must be positive");
    const std::size_t stride = detail::stride_for(path, dt);
    const auto steps = static_cast<std::size_t>(std::llround(T / dt));
    const std::size_t start = path.zero_index;
    if (start + steps * stride > path.size() - 1)
        throw std::invalid_argument("path too short for requested horizon");

    const std::size_t N = c.stable_count();
    std::vector<double> y(1 + 2 * N);
    y[0] = X0;
    for (std::size_t n = 0; n < N; ++n) {
        y[1 + N + n] = mterm_at(c.mterm(n), path, start, tol);
        y[1 + n] = c.b11[n] * y[1 + N + n] * X0 * X0;
    }

    ReducedTrajectory tr;
    tr.first_node = start;
    tr.node_stride = stride * decimation;
    auto record = [&](std::size_t node) {
        ReducedState s;
        s.X = y[0];
        s.phi.assign(y.begin() + 1, y.begin() + 1 + static_cast<std::ptrdiff_t>(N));
        s.m.assign(y.begin() + 1 + static_cast<std::ptrdiff_t>(N), y.end());
        tr.times.push_back(path.time(node));
        tr.states.push_back(std::move(s));
    };
    record(start);
    detail::ReducedSystem sys{c, N};
    HeunWorkspace ws;
    for (std::size_t k = 0; k < steps; ++k) {
        const std::size_t i = start + k * stride;
        const double dW = path.values[i + stride] - path.values[i];
        sys.step(y, dt, dW, ws, tr.diag);
        if ((k + 1) % decimation == 0) record(i + stride);
    }
    return tr;
}

/// a(t) = (2 alpha int_{t-T}^t M(s) exp(-2 eps (t-s) - 2 sigma (W_t - W_s)) ds)^{-1/2}
/// with T = ln(1/tol)/(2 eps) and M the M-term with decay g and noise sigma. Both
/// integrals are advanced by their exact one-step recursions with trapezoidal
/// pieces. Returns a on nodes [from, to].
inline std::vector<double> stationary_amplitude_series(double eps, double alpha, double sigma, double g,
                                                       const BrownianPath& path, std::size_t from,
                                                       std::size_t to, double tol) {
    if (!(eps > 0.0)) throw std::domain_error("stationary amplitude needs epsilon > 0");
    if (!(alpha > 0.0)) throw std::domain_error("stationary amplitude needs alpha > 0");
    if (!(tol > 0.0 && tol < 1.0)) throw std::invalid_argument("tol must lie in (0,1)");
    if (to < from || to >= path.size()) throw std::out_of_range("bad node range");
    const double h = path.dt;
    const double T_trunc = std::log(1.0 / tol) / (2.0 * eps);
    const auto n_tr = static_cast<std::size_t>(std::ceil(T_trunc / h - 1e-9));
    if (from < n_tr) throw std::invalid_argument("insufficient path for stationary amplitude");
    const MTermParams mp{g, sigma};
    const std::size_t begin = from - n_tr;
    double m = mterm_at(mp, path, begin, tol);
    double J = 0.0;
    std::vector<double> out;
    out.reserve(to - from + 1);
    for (std::size_t i = begin; i < to; ++i) {
        const double dW = path.dW(i);
        const double m_next = mterm_quadrature_step(mp, m, dW, h);
        const double decay = std::exp(-2.0 * eps * h - 2.0 * sigma * dW);
        J = decay * J + 0.5 * h * (decay * m + m_next);
        m = m_next;
        if (i + 1 >= from) out.push_back(1.0 / std::sqrt(2.0 * alpha * J));
    }
    return out;
}

inline double stationary_amplitude(double eps, double alpha, double sigma, double g, const BrownianPath& path,
                                   double t, double tol) {
    const std::size_t node = path.index_of(t);
    return stationary_amplitude_series(eps, alpha, sigma, g, path, node, node, tol).back();
}

struct ResidualSeries {
    std::vector<double> times;
    std::vector<double> r1;
    std::vector<std::vector<double>> r2;
};

namespace detail {

inline const CouplingTensor& require_tensor(const ReducedCoeffs& c) {
    if (!c.bss) throw std::invalid_argument("residual needs the coupling tensor");
    if (c.bss->n != c.stable_count() + 1) throw std::invalid_argument("coupling tensor size mismatch");
    return *c.bss;
}

/// Pi_1 B(Y,Y).
inline double pi1_bb(const CouplingTensor& B, const std::vector<double>& y) {
    double s = 0.0;
    for (std::size_t a = 1; a < B.n; ++a)
        for (std::size_t b = 1; b < B.n; ++b) s += B(0, a, b) * y[a - 1] * y[b - 1];
    return s;
}

/// Component m (stable, 0-based) of X F_s(Y) + Pi_s B(Y,Y), split in two.
inline std::pair<double, double> stable_terms(const CouplingTensor& B, const std::vector<double>& y, std::size_t m) {
    double fs = 0.0, bb = 0.0;
    const std::size_t l = m + 1;
    for (std::size_t a = 1; a < B.n; ++a) {
        fs += (B(l, 0, a) + B(l, a, 0)) * y[a - 1];
        for (std::size_t b = 1; b < B.n; ++b) bb += B(l, a, b) * y[a - 1] * y[b - 1];
    }
    return {fs, bb};
}

inline void require_consecutive(const ReducedTrajectory& tr) {
    if (tr.states.empty()) throw std::invalid_argument("empty trajectory");
}

}  // namespace detail

/// R1(t) = -int_0^t e^{eps(t-s) + sigma(W_t-W_s)} Pi_1 B(Phi,Phi) ds and
/// R2(t) = int_0^t e^{beta_n(t-s) + sigma(W_t-W_s)} E3(s) ds,
/// E3 = 2 Phi F_c(Phi) - X F_s(Phi) - Pi_s B(Phi,Phi), by the trapezoidal rule on
/// the stored nodes.
inline ResidualSeries residual(const ReducedTrajectory& tr, const ReducedCoeffs& c, const BrownianPath& path) {
    const auto& B = detail::require_tensor(c);
    detail::require_consecutive(tr);
    const std::size_t N = c.stable_count();
    const double h = path.dt * static_cast<double>(tr.node_stride);
    ResidualSeries r;
    r.times = tr.times;
    r.r1.assign(tr.states.size(), 0.0);
    r.r2.assign(tr.states.size(), std::vector<double>(N, 0.0));

    auto e3 = [&](const ReducedState& s, std::vector<double>& out) {
        const double fc = fc_of(c, s.phi);
        for (std::size_t m = 0; m < N; ++m) {
            const auto [fs, bb] = detail::stable_terms(B, s.phi, m);
            out[m] = 2.0 * s.phi[m] * fc - s.X * fs - bb;
        }
    };
    std::vector<double> e_prev(N), e_next(N);
    double p_prev = detail::pi1_bb(B, tr.states[0].phi);
    e3(tr.states[0], e_prev);
    for (std::size_t k = 0; k + 1 < tr.states.size(); ++k) {
        const std::size_t i = tr.first_node + k * tr.node_stride;
        const double dW = path.values[i + tr.node_stride] - path.values[i];
        const double p_next = detail::pi1_bb(B, tr.states[k + 1].phi);
        e3(tr.states[k + 1], e_next);
        const double f1 = std::exp(c.epsilon * h + c.sigma * dW);
        r.r1[k + 1] = f1 * r.r1[k] - 0.5 * h * (f1 * p_prev + p_next);
        for (std::size_t m = 0; m < N; ++m) {
            const double f2 = std::exp(c.stable_eigs[m] * h + c.sigma * dW);
            r.r2[k + 1][m] = f2 * r.r2[k][m] + 0.5 * h * (f2 * e_prev[m] + e_next[m]);
        }
        p_prev = p_next;
        e_prev.swap(e_next);
    }
    return r;
}

/// Residual evaluated straight from its variation-of-constants definition with
/// Y = Phi; agrees with residual() up to the time-discretization error.
inline ResidualSeries residual_from_definition(const ReducedTrajectory& tr, const ReducedCoeffs& c,
                                               const BrownianPath& path) {
    const auto& B = detail::require_tensor(c);
    detail::require_consecutive(tr);
    const std::size_t N = c.stable_count();
    const double h = path.dt * static_cast<double>(tr.node_stride);
    ResidualSeries r;
    r.times = tr.times;
    r.r1.assign(tr.states.size(), 0.0);
    r.r2.assign(tr.states.size(), std::vector<double>(N, 0.0));

    auto e1 = [&](const ReducedState& s) { return s.X * fc_of(c, s.phi) + detail::pi1_bb(B, s.phi); };
    auto e2 = [&](const ReducedState& s, std::vector<double>& out) {
        for (std::size_t m = 0; m < N; ++m) {
            const auto [fs, bb] = detail::stable_terms(B, s.phi, m);
            out[m] = s.X * s.X * c.b11[m] + s.X * fs + bb;
        }
    };
    const auto& s0 = tr.states[0];
    const double w0 = path.values[tr.first_node];
    double U = 0.0;
    std::vector<double> V(N, 0.0), a(N), b(N);
    double u_prev = e1(s0);
    e2(s0, a);
    for (std::size_t k = 0; k + 1 < tr.states.size(); ++k) {
        const std::size_t i = tr.first_node + k * tr.node_stride;
        const std::size_t j = i + tr.node_stride;
        const double dW = path.values[j] - path.values[i];
        const auto& s = tr.states[k + 1];
        const double t = static_cast<double>(k + 1) * h;
        const double wt = path.values[j] - w0;
        const double u_next = e1(s);
        e2(s, b);
        const double f1 = std::exp(c.epsilon * h + c.sigma * dW);
        U = f1 * U + 0.5 * h * (f1 * u_prev + u_next);
        r.r1[k + 1] = s.X - std::exp(c.epsilon * t + c.sigma * wt) * s0.X - U;
        for (std::size_t m = 0; m < N; ++m) {
            const double f2 = std::exp(c.stable_eigs[m] * h + c.sigma * dW);
            V[m] = f2 * V[m] + 0.5 * h * (f2 * a[m] + b[m]);
            r.r2[k + 1][m] = s.phi[m] - std::exp(c.stable_eigs[m] * t + c.sigma * wt) * s0.phi[m] - V[m];
        }
        u_prev = u_next;
        a.swap(b);
    }
    return r;
}

inline double norm2(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

/// Per-sample suprema over the stored nodes.
struct ReducedSampleSummary {
    double sup_abs_X = 0.0;
    double sup_norm_phi = 0.0;
    double sup_abs_r1 = 0.0;
    double sup_norm_r2 = 0.0;
};

inline ReducedSampleSummary summarize(const ReducedTrajectory& tr, const ResidualSeries* res) {
    ReducedSampleSummary s;
    for (const auto& st : tr.states) {
        s.sup_abs_X = std::max(s.sup_abs_X, std::abs(st.X));
        s.sup_norm_phi = std::max(s.sup_norm_phi, norm2(st.phi));
    }
    if (res) {
        for (std::size_t k = 0; k < res->r1.size(); ++k) {
            s.sup_abs_r1 = std::max(s.sup_abs_r1, std::abs(res->r1[k]));
            s.sup_norm_r2 = std::max(s.sup_norm_r2, norm2(res->r2[k]));
        }
    }
    return s;
}

/// Settings shared by the residual and a priori experiments: sigma = sqrt(eps),
/// X0 = x0_scale sqrt(eps), horizon [0, T/eps].
struct ReducedEnsembleConfig {
    std::size_t samples = 200;
    double T = 1.0;
    double chi = 0.1;
    double x0_scale = 1.0;
    double dt = 0.0;  ///< 0 selects default_dt
    double tol = 1e-8;
    std::uint64_t seed = 1;
    std::size_t workers = 1;
    bool with_residual = true;
};

/// One sample on stream `stream`.
inline ReducedSampleSummary reduced_sample(const ReducedCoeffs& c, const ReducedEnsembleConfig& cfg,
                                           std::uint64_t stream) {
    const double eps = c.epsilon;
    const double dt = cfg.dt > 0.0 ? cfg.dt : default_dt(c);
    const double horizon = cfg.T / eps;
    const double T_pre = reduced_prehistory(c, cfg.tol);
    const auto path = sample_brownian(-(std::ceil(T_pre / dt) + 1.0) * dt, horizon, dt, cfg.seed, stream);
    const auto tr = integrate_reduced(c, path, cfg.x0_scale * std::sqrt(eps), horizon, dt, cfg.tol);
    if (!cfg.with_residual) return summarize(tr, nullptr);
    const auto res = residual(tr, c, path);
    return summarize(tr, &res);
}

struct AprioriReport {
    double C = std::numeric_limits<double>::infinity();  ///< smallest grid C meeting 1 - chi
    std::size_t hits = 0;
    std::size_t n = 0;
    Interval wilson;
    std::vector<double> ratios;  ///< max(sup|X|/sqrt(eps), sup|Phi|/eps) per sample
};

/// Smallest C on the geometric grid c_min (1+step)^j with Wilson lower bound of
/// P(ratio <= C) at least 1 - chi.
inline AprioriReport apriori_from_ratios(std::vector<double> ratios, double chi, double c_min = 1e-3,
                                         double step = 0.005) {
    AprioriReport r;
    r.n = ratios.size();
    r.ratios = ratios;
    std::sort(ratios.begin(), ratios.end());
    if (ratios.empty()) return r;
    for (double C = c_min; C <= ratios.back() * (1.0 + step) + c_min; C *= 1.0 + step) {
        const auto hits = static_cast<std::size_t>(std::upper_bound(ratios.begin(), ratios.end(), C) - ratios.begin());
        const auto w = wilson_interval(hits, ratios.size());
        if (w.lo >= 1.0 - chi) {
            r.C = C;
            r.hits = hits;
            r.wilson = w;
            return r;
        }
    }
    r.hits = ratios.size();
    r.wilson = wilson_interval(r.hits, r.n);
    return r;
}

inline double apriori_ratio(const ReducedSampleSummary& s, double eps) {
    return std::max(s.sup_abs_X / std::sqrt(eps), s.sup_norm_phi / eps);
}

/// Monte Carlo estimate of P(sup|X| <= C sqrt(eps) and sup|Phi| <= C eps) on [0, T/eps].
inline AprioriReport apriori_check(const ReducedCoeffs& c, const ReducedEnsembleConfig& cfg) {
    std::vector<double> ratios(cfg.samples);
    auto run_cfg = cfg;
    run_cfg.with_residual = false;
    parallel_for(cfg.samples, cfg.workers, [&](std::size_t k) {
        ratios[k] = apriori_ratio(reduced_sample(c, run_cfg, k), c.epsilon);
    });
    return apriori_from_ratios(std::move(ratios), cfg.chi);
}

}  // namespace manifold
