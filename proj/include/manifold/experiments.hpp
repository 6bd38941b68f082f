#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <limits>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "manifold/ab_system.hpp"
#include "manifold/config.hpp"
#include "manifold/ensemble.hpp"
#include "manifold/mterm.hpp"
#include "manifold/rbc_model.hpp"
#include "manifold/reduced_model.hpp"
#include "manifold/stats.hpp"
#include "manifold/stochastic_paths.hpp"

#ifndef MANIFOLD_VERSION
#define MANIFOLD_VERSION "unknown"
#endif

namespace manifold {

/// Acceptance thresholds shared by `--check` and the acceptance suite.
namespace thresholds {
inline constexpr double mterm_mean_rel = 0.03;
inline constexpr double mterm_var_rel = 0.05;
inline constexpr double acf_rate_rel = 0.05;
inline constexpr double ks_small = 0.02;  ///< sigma/sqrt(g) <= 0.5
inline constexpr double ks_large = 0.05;  ///< sigma/sqrt(g) = 0.75
inline constexpr double slope_tol = 0.3;
inline constexpr double min_r2 = 0.9;
inline constexpr double pitchfork_slope = 0.5;
inline constexpr double pitchfork_tol = 0.1;
inline constexpr double apriori_stability = 0.2;
inline constexpr double quadrature = 1e-9;
inline constexpr double antisymmetry = 1e-10;
}  // namespace thresholds

struct Check {
    std::string name;
    bool passed = false;
    std::string detail;
};

inline bool all_passed(const std::vector<Check>& checks) {
    for (const auto& c : checks)
        if (!c.passed) return false;
    return true;
}

/// Fixed-precision text for CSV cells, round-trip exact.
inline std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string fmt(std::size_t v) { return std::to_string(v); }
inline std::string fmt(int v) { return std::to_string(v); }
inline std::string fmt(const std::string& v) {
    if (v.find_first_of(",\"\n") == std::string::npos) return v;
    std::string out = "\"";
    for (char ch : v) out += ch == '"' ? std::string("\"\"") : std::string(1, ch);
    return out + "\"";
}
inline std::string fmt(const char* v) { return fmt(std::string(v)); }
inline std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string("undefined"); }

class Table {
public:
    explicit Table(std::vector<std::string> header) : header_(std::move(header)) {}

    template <class... Ts>
    void row(const Ts&... cells) {
        static_assert(sizeof...(Ts) > 0);
        std::vector<std::string> r{fmt(cells)...};
        if (r.size() != header_.size()) throw std::logic_error("row width does not match header");
        rows_.push_back(std::move(r));
    }

    const std::vector<std::string>& header() const { return header_; }
    std::size_t size() const { return rows_.size(); }

    std::string str() const {
        std::string s;
        auto line = [&](const std::vector<std::string>& r) {
            for (std::size_t i = 0; i < r.size(); ++i) {
                if (i) s += ',';
                s += r[i];
            }
            s += '\n';
        };
        line(header_);
        for (const auto& r : rows_) line(r);
        return s;
    }

private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

struct SeedEntry {
    std::size_t grid_point = 0;
    std::size_t sample = 0;
    std::uint64_t stream = 0;
};

struct ExperimentOutput {
    std::vector<std::pair<std::string, Table>> tables;  ///< file name, contents
    std::vector<SeedEntry> seeds;
    std::vector<Check> checks;
    std::vector<std::string> warnings;
};

/// Stream id for sample k of grid point g when grid points must not share noise.
inline std::uint64_t distinct_stream(std::size_t g, std::size_t k) {
    return (static_cast<std::uint64_t>(g + 1) << 32) | static_cast<std::uint64_t>(k);
}

// ---------------------------------------------------------------------------
// mterm-stats

struct MTermStatsRow {
    MTermParams p;
    MTermStats closed;
    double mean_mc = 0.0, var_mc = 0.0, acf_rate_fit = 0.0, ks = 0.0;
    double mean_ens = 0.0, var_ens = 0.0;
    std::size_t halvings = 0;
};

inline double ks_threshold(const MTermParams& p) {
    return std::abs(p.sigma_eff) / std::sqrt(p.g) <= 0.5 + 1e-12 ? thresholds::ks_small : thresholds::ks_large;
}

/// Ergodic statistics of one long Heun-evolved path (stream g), and stationary draws
/// from independent pre-histories (streams distinct_stream(g, k)).
inline MTermStatsRow mterm_stats_case(const MTermParams& p, const MTermStatsParams& cfg, std::size_t index,
                                      std::uint64_t seed, std::size_t workers) {
    MTermStatsRow row;
    row.p = p;
    row.closed = mterm_moments(p);
    const double T_pre = mterm_prehistory(p, cfg.tol);
    const double t0 = -(std::ceil(T_pre / cfg.dt) + 1.0) * cfg.dt;
    {
        const auto path = sample_brownian(t0, cfg.T, cfg.dt, seed, index);
        MTermDiagnostics diag;
        const auto m = mterm_evolve(p, path, path.zero_index, path.size() - 1, cfg.tol, &diag);
        row.halvings = diag.halvings;
        row.mean_mc = mean(m);
        row.var_mc = variance(m);
        // ACF on a coarser grid keeps the lag sum affordable.
        const auto stride = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.01 / cfg.dt)));
        std::vector<double> coarse;
        for (std::size_t i = 0; i < m.size(); i += stride) coarse.push_back(m[i]);
        const double h = cfg.dt * static_cast<double>(stride);
        const auto lags = static_cast<std::size_t>(std::llround(cfg.max_lag / h));
        const auto acf = autocorrelation(coarse, lags);
        std::vector<double> xs, ys;
        for (std::size_t k = 1; k <= lags; ++k)
            if (acf[k] > 0.0) {
                xs.push_back(static_cast<double>(k) * h);
                ys.push_back(std::log(acf[k]));
            }
        row.acf_rate_fit = xs.size() >= 2 ? -fit_linear(xs, ys).slope : 0.0;
    }
    std::vector<double> draws(cfg.samples);
    parallel_for(cfg.samples, workers, [&](std::size_t k) {
        const auto path = sample_brownian(t0, 0.0, cfg.dt, seed, distinct_stream(index, k));
        draws[k] = mterm_init(p, path, cfg.tol);
    });
    row.mean_ens = mean(draws);
    row.var_ens = variance(draws);
    if (mterm_has_variance(p)) row.ks = ks_distance(draws, [&](double x) { return mterm_lognormal_cdf(p, x); });
    else row.ks = std::numeric_limits<double>::quiet_NaN();
    return row;
}

inline std::vector<Check> mterm_checks(const MTermStatsRow& r) {
    std::vector<Check> out;
    const std::string tag = "g=" + fmt(r.p.g) + " sigma=" + fmt(r.p.sigma_eff);
    auto rel = [](double a, double b) { return std::abs(a - b) / std::abs(b); };
    // Sample means and variances have finite spread only while the next two moments
    // exist; the stationary law is inverse gamma with shape 2g/sigma^2.
    const double shape = r.p.sigma_eff == 0.0 ? std::numeric_limits<double>::infinity()
                                              : 2.0 * r.p.g / (r.p.sigma_eff * r.p.sigma_eff);
    if (r.closed.mean && shape > 2.0) {
        const double e1 = rel(r.mean_mc, *r.closed.mean), e2 = rel(r.mean_ens, *r.closed.mean);
        out.push_back({"mean " + tag, e1 <= thresholds::mterm_mean_rel && e2 <= thresholds::mterm_mean_rel,
                       "ergodic " + fmt(r.mean_mc) + ", ensemble " + fmt(r.mean_ens) + ", closed " + fmt(*r.closed.mean)});
    }
    if (r.closed.variance && *r.closed.variance > 0.0 && shape > 4.0) {
        const double e1 = rel(r.var_mc, *r.closed.variance), e2 = rel(r.var_ens, *r.closed.variance);
        out.push_back({"variance " + tag, e1 <= thresholds::mterm_var_rel && e2 <= thresholds::mterm_var_rel,
                       "ergodic " + fmt(r.var_mc) + ", ensemble " + fmt(r.var_ens) + ", closed " +
                           fmt(*r.closed.variance)});
        out.push_back({"acf rate " + tag, rel(r.acf_rate_fit, r.closed.acf_rate) <= thresholds::acf_rate_rel,
                       "fit " + fmt(r.acf_rate_fit) + ", closed " + fmt(r.closed.acf_rate)});
    }
    if (r.closed.variance && *r.closed.variance > 0.0)
        out.push_back({"ks lognormal " + tag, r.ks < ks_threshold(r.p),
                       "ks " + fmt(r.ks) + " vs " + fmt(ks_threshold(r.p))});
    return out;
}

inline ExperimentOutput run_mterm_stats(const ExperimentConfig& cfg) {
    const auto& P = cfg.mterm;
    ExperimentOutput out;
    Table t({"g", "sigma_eff", "mean_closed", "mean_mc", "var_closed", "var_mc", "acf_rate_closed", "acf_rate_fit",
             "ks_lognormal", "mean_ensemble", "var_ensemble", "halvings"});
    for (std::size_t i = 0; i < P.cases.size(); ++i) {
        const MTermParams p{P.cases[i].g, P.cases[i].sigma_eff};
        const auto r = mterm_stats_case(p, P, i, cfg.seed, cfg.workers);
        t.row(p.g, p.sigma_eff, r.closed.mean, r.mean_mc, r.closed.variance, r.var_mc, r.closed.acf_rate,
              r.acf_rate_fit, r.ks, r.mean_ens, r.var_ens, r.halvings);
        for (auto& c : mterm_checks(r)) out.checks.push_back(std::move(c));
        out.seeds.push_back({i, 0, i});
        for (std::size_t k = 0; k < P.samples; ++k) out.seeds.push_back({i, k + 1, distinct_stream(i, k)});
    }
    out.tables.emplace_back("mterm_stats.csv", std::move(t));
    return out;
}

// ---------------------------------------------------------------------------
// ab-compare

inline AbParams ab_params(const AbCompareParams& P) { return {P.lambda, P.kappa, P.sigma, P.A0, P.B0}; }

inline AbCompareConfig ab_config(const AbCompareParams& P, std::uint64_t seed, std::size_t workers) {
    AbCompareConfig c;
    c.samples = P.samples;
    c.T = P.T;
    c.dt = P.dt;
    c.tol = P.tol;
    c.seed = seed;
    c.workers = workers;
    c.snapshot_times = P.snapshot_times;
    c.snapshot_points = P.snapshot_points;
    return c;
}

struct AbRanking {
    double median_det = 0.0, median_nonmarkov = 0.0, median_exact = 0.0;
    std::size_t ok = 0;
};

inline AbRanking ab_ranking(const AbCompareReport& rep) {
    std::vector<double> d, n, e;
    for (const auto& r : rep.rows)
        if (r.status == "ok") {
            d.push_back(r.rmse_det);
            n.push_back(r.rmse_nonmarkov);
            e.push_back(r.rmse_exact);
        }
    AbRanking out;
    out.ok = d.size();
    if (!d.empty()) {
        out.median_det = median(d);
        out.median_nonmarkov = median(n);
        out.median_exact = median(e);
    }
    return out;
}

inline ExperimentOutput run_ab_compare(const ExperimentConfig& cfg) {
    const auto rep = ab_compare(ab_params(cfg.ab), ab_config(cfg.ab, cfg.seed, cfg.workers));
    ExperimentOutput out;
    Table t({"sample", "rmse_det", "rmse_nonmarkov", "rmse_exact", "status"});
    for (const auto& r : rep.rows) t.row(r.sample, r.rmse_det, r.rmse_nonmarkov, r.rmse_exact, r.status);
    Table s({"t", "A_full", "B_full", "A_det", "A_nonmarkov", "A_exact", "M"});
    for (const auto& r : rep.series) s.row(r.t, r.A_full, r.B_full, r.A_det, r.A_nonmarkov, r.A_exact, r.M);
    Table m({"t", "kind", "A", "B"});
    for (const auto& p : rep.manifold) m.row(p.t, "manifold", p.A, p.B);
    for (const auto& p : rep.full_points) m.row(p.t, "full", p.A, p.B);
    for (std::size_t k = 0; k < cfg.ab.samples; ++k) out.seeds.push_back({0, k, k});
    const auto rk = ab_ranking(rep);
    out.checks.push_back({"median rmse nonmarkov < deterministic", rk.ok > 0 && rk.median_nonmarkov < rk.median_det,
                          "nonmarkov " + fmt(rk.median_nonmarkov) + ", deterministic " + fmt(rk.median_det) +
                              ", exact " + fmt(rk.median_exact) + ", ok samples " + fmt(rk.ok)});
    out.tables.emplace_back("ab_compare.csv", std::move(t));
    out.tables.emplace_back("ab_series.csv", std::move(s));
    out.tables.emplace_back("ab_manifold.csv", std::move(m));
    return out;
}

// ---------------------------------------------------------------------------
// rbc-spectrum

struct RbcAnchors {
    rbc::CriticalRayleigh critical;
    double B2_11_closed = 0.0, B2_11_quad = 0.0;
    double F_sum_closed = 0.0, F_sum_quad = 0.0;
    double alpha = 0.0;
    double slope_fd = 0.0, slope_closed = 0.0;
    double antisymmetry_error = 0.0;
    double selection_leak = 0.0;  ///< largest |<B(e1,e1), e>| over retained e other than e_02
    double refinement_delta = 0.0;
    double max_eigen_residual = 0.0;
    double max_divergence = 0.0;
    rbc::ConditionL condition;
    std::size_t modes = 0, entries = 0;
};

inline RbcAnchors rbc_anchors(const rbc::GalerkinSystem& sys) {
    using namespace rbc;
    RbcAnchors a;
    const double L = sys.params.L, Ra = sys.params.Ra;
    a.critical = critical_rayleigh(L);
    const auto rc = reduced_rbc_coeffs(L, Ra);
    a.B2_11_closed = rc.B2_11;
    a.F_sum_closed = rc.F_sum;
    a.alpha = rc.alpha;
    const std::size_t e1 = sys.lead, e2 = sys.slaved;
    a.B2_11_quad = sys.coeff(e2, e1, e1);
    a.F_sum_quad = sys.coeff(e1, e1, e2) + sys.coeff(e1, e2, e1);
    const TrigQuadrature q(L, sys.j_max, sys.k_max);
    for (std::size_t l = 0; l < sys.size(); ++l) {
        if (l == e2) continue;
        a.selection_leak = std::max(a.selection_leak, std::abs(q.interaction(sys.modes[e1], sys.modes[e1], sys.modes[l])));
    }
    const double h = 1e-3;
    a.slope_fd = (epsilon_of_ra(L, a.critical.Ra_c + h) - epsilon_of_ra(L, a.critical.Ra_c - h)) / (2.0 * h);
    a.slope_closed = epsilon_slope(L);
    a.antisymmetry_error = sys.antisymmetry_error;
    a.refinement_delta = sys.refinement_delta;
    for (const auto& m : sys.modes) {
        a.max_eigen_residual = std::max(a.max_eigen_residual, eigen_residual(m, L, Ra));
        a.max_divergence = std::max(a.max_divergence, std::abs(divergence_coeff(m, L)));
    }
    a.condition = condition_l(L, std::max(Ra, 1.05 * a.critical.Ra_c));
    a.modes = sys.size();
    a.entries = sys.entries.size();
    return a;
}

inline std::vector<Check> rbc_anchor_checks(const RbcAnchors& a) {
    return {
        {"closed form B2_11 vs quadrature", std::abs(a.B2_11_closed - a.B2_11_quad) <= thresholds::quadrature,
         fmt(a.B2_11_closed) + " vs " + fmt(a.B2_11_quad)},
        {"closed form F_sum vs quadrature", std::abs(a.F_sum_closed - a.F_sum_quad) <= thresholds::quadrature,
         fmt(a.F_sum_closed) + " vs " + fmt(a.F_sum_quad)},
        {"B2_11 = -F_sum", std::abs(a.B2_11_closed + a.F_sum_closed) <= 1e-12, fmt(a.B2_11_closed + a.F_sum_closed)},
        {"selection rule", a.selection_leak <= thresholds::antisymmetry, "leak " + fmt(a.selection_leak)},
        {"antisymmetry", a.antisymmetry_error < thresholds::antisymmetry, fmt(a.antisymmetry_error)},
        {"epsilon slope", std::abs(a.slope_fd - a.slope_closed) <= 1e-6,
         fmt(a.slope_fd) + " vs " + fmt(a.slope_closed)},
    };
}

inline ExperimentOutput run_rbc_spectrum(const ExperimentConfig& cfg) {
    using namespace rbc;
    const auto& P = cfg.spectrum;
    const auto cr = critical_rayleigh(P.L);
    const double Ra = cr.Ra_c + P.dRa;
    const auto sys = assemble_galerkin({P.L, Ra, 0.0}, P.jmax, P.kmax);
    ExperimentOutput out;
    Table t({"index", "group", "j", "k", "sign", "beta", "a", "b", "c", "norm_const", "eigen_residual"});
    for (std::size_t i = 0; i < sys.size(); ++i) {
        const auto& m = sys.modes[i];
        t.row(i, m.group == Group::one ? "one" : "two", m.j, m.k, m.sign, m.beta, m.a, m.b, m.c, m.norm_const,
              eigen_residual(m, P.L, Ra));
    }
    const auto a = rbc_anchors(sys);
    Table s({"quantity", "value"});
    s.row("L", P.L);
    s.row("Ra", Ra);
    s.row("Ra_c", a.critical.Ra_c);
    s.row("j_c", a.critical.j_c);
    s.row("degenerate", a.critical.degenerate ? "true" : "false");
    s.row("epsilon", epsilon_of_ra(P.L, Ra));
    s.row("B2_11_closed", a.B2_11_closed);
    s.row("B2_11_quadrature", a.B2_11_quad);
    s.row("F_sum_closed", a.F_sum_closed);
    s.row("F_sum_quadrature", a.F_sum_quad);
    s.row("alpha", a.alpha);
    s.row("epsilon_slope_fd", a.slope_fd);
    s.row("epsilon_slope_closed", a.slope_closed);
    s.row("antisymmetry_error", a.antisymmetry_error);
    s.row("selection_leak", a.selection_leak);
    s.row("refinement_delta", a.refinement_delta);
    s.row("max_eigen_residual", a.max_eigen_residual);
    s.row("max_divergence", a.max_divergence);
    s.row("condition_l_eta", a.condition.eta);
    s.row("condition_l_delta", a.condition.delta);
    s.row("modes", a.modes);
    s.row("tensor_entries", a.entries);
    out.checks = rbc_anchor_checks(a);
    out.tables.emplace_back("rbc_spectrum.csv", std::move(t));
    out.tables.emplace_back("rbc_summary.csv", std::move(s));
    return out;
}

// ---------------------------------------------------------------------------
// rbc-bifurcation

inline rbc::BifurcationConfig bifurcation_config(const RbcBifurcationParams& P, std::uint64_t seed,
                                                 std::size_t workers) {
    rbc::BifurcationConfig c;
    c.L = P.L;
    c.dRa_grid = P.dRa_grid;
    c.samples = P.samples;
    c.sigma = P.sigma;
    c.bandwidth = P.bandwidth;
    c.grid_points = P.grid_points;
    c.dt = P.dt;
    c.tol = P.tol;
    c.seed = seed;
    c.workers = workers;
    return c;
}

inline Check pitchfork_check(const rbc::BifurcationReport& rep) {
    std::size_t positive = 0;
    for (const auto& c : rep.curve)
        if (c.dRa > 0.0) ++positive;
    const bool ok = positive >= 3 &&
                    std::abs(rep.fit.slope - thresholds::pitchfork_slope) <= thresholds::pitchfork_tol;
    return {"most probable |X| slope", ok, "slope " + fmt(rep.fit.slope) + ", r2 " + fmt(rep.fit.r2)};
}

inline ExperimentOutput run_rbc_bifurcation(const ExperimentConfig& cfg) {
    const auto bc = bifurcation_config(cfg.bifurcation, cfg.seed, cfg.workers);
    const auto rep = rbc::bifurcation_pdf(bc);
    ExperimentOutput out;
    Table pdf({"dRa", "epsilon", "x", "density", "point_mass"});
    for (const auto& r : rep.pdf) pdf.row(r.dRa, r.epsilon, r.x, r.density, r.point_mass ? "true" : "false");
    Table curve({"dRa", "epsilon", "most_probable", "median_abs", "bandwidth"});
    for (const auto& r : rep.curve) curve.row(r.dRa, r.epsilon, r.most_probable, r.median_abs, r.bandwidth);
    Table samples({"dRa", "sample", "amplitude"});
    for (std::size_t g = 0; g < bc.dRa_grid.size(); ++g)
        for (std::size_t k = 0; k < rep.amplitudes[g].size(); ++k) {
            samples.row(bc.dRa_grid[g], k, rep.amplitudes[g][k]);
            out.seeds.push_back({g, k, k});
        }
    out.checks.push_back(pitchfork_check(rep));
    out.tables.emplace_back("rbc_bifurcation_pdf.csv", std::move(pdf));
    out.tables.emplace_back("rbc_bifurcation_curve.csv", std::move(curve));
    out.tables.emplace_back("rbc_bifurcation_samples.csv", std::move(samples));
    return out;
}

// ---------------------------------------------------------------------------
// rbc-error-scaling

inline rbc::ErrorConfig error_config(const RbcErrorParams& P, std::uint64_t seed, std::size_t workers) {
    rbc::ErrorConfig c;
    c.L = P.L;
    c.dRa_grid = P.dRa_grid;
    c.samples = P.samples;
    c.j_max = P.jmax;
    c.k_max = P.kmax;
    c.dt = P.dt;
    c.T = P.T;
    c.x0_scale = P.x0_scale;
    c.sigma_scale = P.sigma_scale;
    c.tol = P.tol;
    c.seed = seed;
    c.workers = workers;
    return c;
}

inline std::vector<Check> slope_checks(const std::string& a_name, const LinearFit& fa, double target_a,
                                       const std::string& b_name, const LinearFit& fb, double target_b,
                                       bool need_r2) {
    auto one = [&](const std::string& n, const LinearFit& f, double target) {
        bool ok = std::abs(f.slope - target) <= thresholds::slope_tol;
        if (need_r2) ok = ok && f.r2 >= thresholds::min_r2;
        return Check{n, ok, "slope " + fmt(f.slope) + " (target " + fmt(target) + "), r2 " + fmt(f.r2)};
    };
    return {one(a_name, fa, target_a), one(b_name, fb, target_b)};
}

inline ExperimentOutput run_rbc_error(const ExperimentConfig& cfg) {
    const auto rep = rbc::error_experiment(error_config(cfg.error, cfg.seed, cfg.workers));
    ExperimentOutput out;
    Table t({"dRa", "epsilon", "sample", "sup_abs_a", "sup_norm_b", "status"});
    for (const auto& r : rep.rows) t.row(r.dRa, r.epsilon, r.sample, r.sup_abs_a, r.sup_norm_b, r.status);
    Table s({"dRa", "epsilon", "median_sup_abs_a", "median_sup_norm_b", "q90_sup_abs_a", "q90_sup_norm_b", "ok"});
    for (const auto& r : rep.summary) s.row(r.dRa, r.epsilon, r.median_a, r.median_b, r.q90_a, r.q90_b, r.ok);
    for (std::size_t g = 0; g < cfg.error.dRa_grid.size(); ++g)
        for (std::size_t k = 0; k < cfg.error.samples; ++k) out.seeds.push_back({g, k, k});
    out.checks = slope_checks("sup|a| slope", rep.fit_a, 1.0, "sup|b| slope", rep.fit_b, 1.5, false);
    out.warnings = rep.warnings;
    out.tables.emplace_back("rbc_error.csv", std::move(t));
    out.tables.emplace_back("rbc_error_summary.csv", std::move(s));
    return out;
}

// ---------------------------------------------------------------------------
// residual-scaling and apriori-check on the three-mode test system

struct ResidualScalingReport {
    std::vector<double> epsilons;
    std::vector<std::vector<ReducedSampleSummary>> samples;
    std::vector<std::vector<std::string>> status;
    std::vector<double> median_r1, median_r2;
    LinearFit fit_r1, fit_r2;
};

inline ResidualScalingReport residual_scaling(const ResidualScalingParams& P, std::uint64_t seed,
                                              std::size_t workers) {
    ResidualScalingReport rep;
    rep.epsilons = P.epsilons;
    const std::size_t G = P.epsilons.size();
    rep.samples.assign(G, std::vector<ReducedSampleSummary>(P.samples));
    rep.status.assign(G, std::vector<std::string>(P.samples, "ok"));
    ReducedEnsembleConfig rc;
    rc.samples = P.samples;
    rc.T = P.T;
    rc.x0_scale = P.x0_scale;
    rc.dt = P.dt;
    rc.tol = P.tol;
    rc.seed = seed;
    parallel_for(G * P.samples, workers, [&](std::size_t t) {
        const std::size_t g = t / P.samples, k = t % P.samples;
        const double eps = P.epsilons[g];
        try {
            rep.samples[g][k] = reduced_sample(triad_coeffs(eps, std::sqrt(eps)), rc, k);
        } catch (const std::exception& e) {
            rep.status[g][k] = std::string("failed: ") + e.what();
        }
    });
    std::vector<double> xs;
    for (std::size_t g = 0; g < G; ++g) {
        std::vector<double> r1, r2;
        for (std::size_t k = 0; k < P.samples; ++k)
            if (rep.status[g][k] == "ok") {
                r1.push_back(rep.samples[g][k].sup_abs_r1);
                r2.push_back(rep.samples[g][k].sup_norm_r2);
            }
        rep.median_r1.push_back(r1.empty() ? 0.0 : median(r1));
        rep.median_r2.push_back(r2.empty() ? 0.0 : median(r2));
    }
    if (G >= 3) {
        rep.fit_r1 = fit_loglog(rep.epsilons, rep.median_r1);
        rep.fit_r2 = fit_loglog(rep.epsilons, rep.median_r2);
    }
    return rep;
}

inline ExperimentOutput run_residual_scaling(const ExperimentConfig& cfg) {
    const auto& P = cfg.residual;
    const auto rep = residual_scaling(P, cfg.seed, cfg.workers);
    ExperimentOutput out;
    Table t({"epsilon", "sample", "sup_abs_X", "sup_norm_phi", "sup_abs_r1", "sup_norm_r2", "status"});
    for (std::size_t g = 0; g < rep.epsilons.size(); ++g)
        for (std::size_t k = 0; k < P.samples; ++k) {
            const auto& s = rep.samples[g][k];
            t.row(rep.epsilons[g], k, s.sup_abs_X, s.sup_norm_phi, s.sup_abs_r1, s.sup_norm_r2, rep.status[g][k]);
            out.seeds.push_back({g, k, k});
        }
    Table s({"epsilon", "median_sup_abs_r1", "median_sup_norm_r2"});
    for (std::size_t g = 0; g < rep.epsilons.size(); ++g) s.row(rep.epsilons[g], rep.median_r1[g], rep.median_r2[g]);
    out.checks = slope_checks("sup|R1| slope", rep.fit_r1, 1.0, "sup|R2| slope", rep.fit_r2, 1.5, true);
    out.tables.emplace_back("residual_scaling.csv", std::move(t));
    out.tables.emplace_back("residual_scaling_summary.csv", std::move(s));
    return out;
}

struct AprioriStudy {
    AprioriReport base;
    std::optional<AprioriReport> doubled;
    double relative_change = 0.0;
};

inline AprioriStudy apriori_study(const AprioriParams& P, std::uint64_t seed, std::size_t workers) {
    const auto c = triad_coeffs(P.epsilon, std::sqrt(P.epsilon));
    ReducedEnsembleConfig rc;
    rc.T = P.T;
    rc.chi = P.chi;
    rc.x0_scale = P.x0_scale;
    rc.dt = P.dt;
    rc.tol = P.tol;
    rc.seed = seed;
    rc.workers = workers;
    rc.samples = P.doubling ? 2 * P.samples : P.samples;
    // The doubled ensemble extends the base one: streams 0..n-1 are shared.
    const auto all = apriori_check(c, rc);
    AprioriStudy s;
    std::vector<double> head(all.ratios.begin(), all.ratios.begin() + static_cast<std::ptrdiff_t>(P.samples));
    s.base = apriori_from_ratios(head, P.chi);
    if (P.doubling) {
        s.doubled = all;
        s.relative_change = std::abs(all.C - s.base.C) / s.base.C;
    }
    return s;
}

inline std::vector<Check> apriori_checks(const AprioriStudy& s, double chi) {
    std::vector<Check> out;
    out.push_back({"a priori probability", std::isfinite(s.base.C) && s.base.wilson.lo >= 1.0 - chi,
                   "C " + fmt(s.base.C) + ", Wilson [" + fmt(s.base.wilson.lo) + ", " + fmt(s.base.wilson.hi) + "]"});
    if (s.doubled)
        out.push_back({"a priori C stable under doubling", s.relative_change <= thresholds::apriori_stability,
                       "C " + fmt(s.base.C) + " -> " + fmt(s.doubled->C) + ", change " + fmt(s.relative_change)});
    return out;
}

inline ExperimentOutput run_apriori(const ExperimentConfig& cfg) {
    const auto& P = cfg.apriori;
    const auto s = apriori_study(P, cfg.seed, cfg.workers);
    ExperimentOutput out;
    Table t({"ensemble", "samples", "C", "hits", "wilson_lo", "wilson_hi"});
    t.row("base", s.base.n, s.base.C, s.base.hits, s.base.wilson.lo, s.base.wilson.hi);
    if (s.doubled) t.row("doubled", s.doubled->n, s.doubled->C, s.doubled->hits, s.doubled->wilson.lo, s.doubled->wilson.hi);
    Table r({"sample", "ratio"});
    const auto& ratios = s.doubled ? s.doubled->ratios : s.base.ratios;
    for (std::size_t k = 0; k < ratios.size(); ++k) {
        r.row(k, ratios[k]);
        out.seeds.push_back({0, k, k});
    }
    out.checks = apriori_checks(s, P.chi);
    out.tables.emplace_back("apriori.csv", std::move(t));
    out.tables.emplace_back("apriori_ratios.csv", std::move(r));
    return out;
}

// ---------------------------------------------------------------------------
// Dispatch and output

inline ExperimentOutput run_experiment(const ExperimentConfig& cfg) {
    validate(cfg);
    const auto& id = cfg.experiment;
    if (id == "mterm-stats") return run_mterm_stats(cfg);
    if (id == "ab-compare") return run_ab_compare(cfg);
    if (id == "rbc-spectrum") return run_rbc_spectrum(cfg);
    if (id == "rbc-bifurcation") return run_rbc_bifurcation(cfg);
    if (id == "rbc-error-scaling") return run_rbc_error(cfg);
    if (id == "residual-scaling") return run_residual_scaling(cfg);
    if (id == "apriori-check") return run_apriori(cfg);
    throw ConfigValidationError("experiment", "unknown experiment id");
}

inline std::string utc_timestamp() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline json manifest_json(const ExperimentConfig& cfg, const ExperimentOutput& out, const std::string& started,
                          double wall_seconds) {
    json seeds = json::array();
    for (const auto& s : out.seeds)
        seeds.push_back({{"grid_point", s.grid_point}, {"sample", s.sample}, {"seed", cfg.seed}, {"stream", s.stream}});
    json files = json::array();
    for (const auto& [name, table] : out.tables) files.push_back({{"file", name}, {"rows", table.size()}});
    json checks = json::array();
    for (const auto& c : out.checks) checks.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
    return {{"config", to_json(cfg)},
            {"version", MANIFOLD_VERSION},
            {"started_utc", started},
            {"wall_clock_seconds", wall_seconds},
            {"outputs", files},
            {"checks", checks},
            {"warnings", out.warnings},
            {"seed_table", seeds}};
}

struct RunResult {
    ExperimentOutput output;
    std::filesystem::path directory;
};

/// Runs the experiment and writes every table plus manifest.json into cfg.output_dir.
inline RunResult run_ensemble(const ExperimentConfig& cfg) {
    const std::string started = utc_timestamp();
    const auto t0 = std::chrono::steady_clock::now();
    RunResult res;
    res.output = run_experiment(cfg);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.directory = cfg.output_dir;
    std::filesystem::create_directories(res.directory);
    auto write = [&](const std::string& name, const std::string& text) {
        std::ofstream f(res.directory / name, std::ios::binary);
        if (!f) throw std::runtime_error("cannot open " + (res.directory / name).string() + " for writing");
        f << text;
        if (!f) throw std::runtime_error("write failed for " + (res.directory / name).string());
    };
    for (const auto& [name, table] : res.output.tables) write(name, table.str());
    write("manifest.json", manifest_json(cfg, res.output, started, wall).dump(2) + "\n");
    return res;
}

}  // namespace manifold
