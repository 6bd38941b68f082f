#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <stdexcept>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>

#include "manifold/reduced_model.hpp"
#include "manifold/sde.hpp"

namespace manifold::rbc {

inline constexpr double pi = std::numbers::pi;

/// Boussinesq convection with Pr = 1 on (0,L) x (0,1), free-slip walls.
struct RbcParams {
    double L = 3.0;
    double Ra = 660.0;
    double sigma = 0.0;

    void validate() const {
        if (!(L > 0.0)) throw std::invalid_argument("L must be positive");
        if (!(Ra > 0.0)) throw std::invalid_argument("Ra must be positive");
        if (!(sigma >= 0.0)) throw std::invalid_argument("sigma must be non-negative");
    }
};

enum class Group { one, two };

/// Group one: (0, 0, sqrt(2/L) sin(k pi z)).
/// Group two: (a sin(alpha x) cos(k pi z), b cos(alpha x) sin(k pi z), c cos(alpha x) sin(k pi z)).
struct Eigenmode {
    Group group = Group::one;
    int j = 0;
    int k = 1;
    int sign = 0;  ///< +1 / -1 for group two, 0 for group one
    double beta = 0.0;
    double a = 0.0, b = 0.0, c = 0.0;
    double norm_const = 0.0;
};

inline double alpha_of(double L, int j) { return j * pi / L; }
inline double gamma2_of(double L, int j, int k) {
    const double al = alpha_of(L, j);
    return al * al + k * k * pi * pi;
}

inline double beta_group_one(int k) { return -k * k * pi * pi; }

inline double beta_group_two(double L, double Ra, int j, int k, int sign) {
    const double al = alpha_of(L, j);
    const double g2 = gamma2_of(L, j, k);
    return -g2 + sign * std::sqrt(Ra * al * al / g2);
}

inline Eigenmode group_one_mode(double L, int k) {
    if (k < 1) throw std::invalid_argument("k must be at least 1");
    Eigenmode e;
    e.group = Group::one;
    e.k = k;
    e.beta = beta_group_one(k);
    e.c = std::sqrt(2.0 / L);
    e.norm_const = e.c;
    return e;
}

inline Eigenmode group_two_mode(double L, double Ra, int j, int k, int sign) {
    if (j < 1 || k < 1) throw std::invalid_argument("group two needs j, k >= 1");
    if (sign != 1 && sign != -1) throw std::invalid_argument("sign must be +1 or -1");
    Eigenmode e;
    e.group = Group::two;
    e.j = j;
    e.k = k;
    e.sign = sign;
    e.beta = beta_group_two(L, Ra, j, k, sign);
    const double al = alpha_of(L, j);
    const double g2 = gamma2_of(L, j, k);
    const double gb = g2 + e.beta;
    const double N = std::sqrt(4.0 * gb * gb / (L * (g2 * gb * gb + Ra * al * al)));
    e.norm_const = N;
    e.a = -k * pi * N;
    e.b = al * N;
    e.c = std::sqrt(Ra) * al * N / gb;
    return e;
}

/// Linear operator applied to a group-two-shaped coefficient triple (a,b,c) at
/// wavenumbers (j,k): velocity -gamma^2 plus the projected buoyancy sqrt(Ra) theta e_z,
/// temperature -gamma^2 plus sqrt(Ra) w.
inline std::array<double, 3> apply_linear(double L, double Ra, int j, int k, double a, double b, double c) {
    const double al = alpha_of(L, j);
    const double g2 = gamma2_of(L, j, k);
    const double sr = std::sqrt(Ra);
    if (j == 0) return {0.0, 0.0, -g2 * c};
    return {-g2 * a - sr * c * al * k * pi / g2, -g2 * b + sr * c * al * al / g2, -g2 * c + sr * b};
}

inline double eigen_residual(const Eigenmode& e, double L, double Ra) {
    const auto r = apply_linear(L, Ra, e.j, e.k, e.a, e.b, e.c);
    return std::max({std::abs(r[0] - e.beta * e.a), std::abs(r[1] - e.beta * e.b), std::abs(r[2] - e.beta * e.c)});
}

/// Divergence of the velocity, coefficient of cos(alpha x) cos(k pi z).
inline double divergence_coeff(const Eigenmode& e, double L) {
    return e.a * alpha_of(L, e.j) + e.b * e.k * pi;
}

inline bool mode_order(const Eigenmode& x, const Eigenmode& y) {
    if (x.beta != y.beta) return x.beta > y.beta;
    return std::tuple(x.group == Group::two, x.j, x.k, -x.sign) < std::tuple(y.group == Group::two, y.j, y.k, -y.sign);
}

/// Group one for k <= k_max and both group-two branches for j <= j_max, k <= k_max,
/// sorted by decreasing eigenvalue.
inline std::vector<Eigenmode> eigen_spectrum(const RbcParams& p, int j_max, int k_max) {
    p.validate();
    if (j_max < 1 || k_max < 1) throw std::invalid_argument("j_max and k_max must be at least 1");
    std::vector<Eigenmode> out;
    for (int k = 1; k <= k_max; ++k) out.push_back(group_one_mode(p.L, k));
    for (int j = 1; j <= j_max; ++j)
        for (int k = 1; k <= k_max; ++k)
            for (int s : {1, -1}) out.push_back(group_two_mode(p.L, p.Ra, j, k, s));
    std::sort(out.begin(), out.end(), mode_order);
    return out;
}

struct CriticalRayleigh {
    double Ra_c = 0.0;
    int j_c = 0;
    bool degenerate = false;
};

inline double ra_of_j(double L, int j) {
    const double q = (j * j) / (L * L);
    return std::pow(pi, 4) * std::pow(1.0 + q, 3) / q;
}

/// Ra_c = min_j pi^4 (1 + j^2/L^2)^3 / (j^2/L^2); candidates floor/ceil of L/sqrt(2)
/// plus a sweep over j <= 4L.
inline CriticalRayleigh critical_rayleigh(double L) {
    if (!(L > 0.0)) throw std::invalid_argument("L must be positive");
    std::vector<int> cand;
    const double x = L / std::numbers::sqrt2;
    for (double v : {std::floor(x), std::ceil(x)})
        if (v >= 1.0) cand.push_back(static_cast<int>(v));
    const int sweep = std::max(1, static_cast<int>(std::ceil(4.0 * L)));
    for (int j = 1; j <= sweep; ++j) cand.push_back(j);
    std::sort(cand.begin(), cand.end());
    cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
    CriticalRayleigh r;
    r.Ra_c = std::numeric_limits<double>::infinity();
    for (int j : cand) {
        const double v = ra_of_j(L, j);
        if (v < r.Ra_c) {
            r.Ra_c = v;
            r.j_c = j;
        }
    }
    for (int j : cand)
        if (j != r.j_c && std::abs(ra_of_j(L, j) - r.Ra_c) <= 1e-12 * r.Ra_c) r.degenerate = true;
    return r;
}

/// epsilon = beta^+_{j_c 1}(Ra) from the exact eigenvalue.
inline double epsilon_of_ra(double L, double Ra) {
    return beta_group_two(L, Ra, critical_rayleigh(L).j_c, 1, 1);
}

/// d epsilon / d Ra at Ra_c, alpha^2 / (2 gamma^4).
inline double epsilon_slope(double L) {
    const int jc = critical_rayleigh(L).j_c;
    const double al = alpha_of(L, jc);
    const double g2 = gamma2_of(L, jc, 1);
    return al * al / (2.0 * g2 * g2);
}

struct ReducedRbcCoeffs {
    double B2_11 = 0.0;  ///< <B(e1,e1), e_{02}>
    double F_sum = 0.0;  ///< B^1_{12} + B^1_{21}
    double alpha = 0.0;  ///< -B2_11 F_sum
};

inline ReducedRbcCoeffs reduced_rbc_coeffs(double L, double Ra) {
    const int jc = critical_rayleigh(L).j_c;
    const double al = alpha_of(L, jc);
    const double g2 = gamma2_of(L, jc, 1);
    const double gb = g2 + beta_group_two(L, Ra, jc, 1, 1);
    ReducedRbcCoeffs r;
    r.B2_11 = -pi * std::sqrt(2.0 * Ra) * gb * al * al / (std::sqrt(L) * (g2 * gb * gb + Ra * al * al));
    r.F_sum = pi * std::sqrt(2.0 * Ra) * gb * al * al / (std::sqrt(L) * (g2 * gb * gb + Ra * al * al));
    r.alpha = -r.B2_11 * r.F_sum;
    return r;
}

/// Reduced system on the single slaved mode e_{02}.
inline ReducedCoeffs rbc_reduced_system(double L, double Ra, double sigma) {
    const auto rc = reduced_rbc_coeffs(L, Ra);
    ReducedCoeffs c;
    c.epsilon = epsilon_of_ra(L, Ra);
    c.sigma = sigma;
    c.stable_eigs = {beta_group_one(2)};
    c.b11 = {rc.B2_11};
    c.fcross = {rc.F_sum};
    return c;
}

struct ConditionL {
    double eta = 0.0;
    double delta = 0.0;
};

/// Grid search for eta in (0,1) maximizing delta such that every stable mode obeys
/// -eta gamma^2 +/- sqrt(Ra alpha^2/gamma^2) <= -delta on [Ra_c, Ra_star]
/// (group one: -eta k^2 pi^2).
inline ConditionL condition_l(double L, double Ra_star, int eta_points = 999) {
    const auto cr = critical_rayleigh(L);
    if (!(Ra_star >= cr.Ra_c)) throw std::invalid_argument("Ra_star below Ra_c");
    const int jbound = std::max(8, static_cast<int>(std::ceil(8.0 * L)));
    ConditionL best;
    for (int i = 1; i <= eta_points; ++i) {
        const double eta = static_cast<double>(i) / (eta_points + 1);
        double worst = -eta * pi * pi;
        for (int j = 1; j <= jbound; ++j)
            for (int k = 1; k <= 8; ++k) {
                if (j == cr.j_c && k == 1) continue;
                const double al = alpha_of(L, j);
                const double g2 = gamma2_of(L, j, k);
                worst = std::max(worst, -eta * g2 + std::sqrt(Ra_star * al * al / g2));
            }
        const double g11 = gamma2_of(L, 1, 1);
        worst = std::max(worst, -eta * g11);
        if (-worst > best.delta) best = {eta, -worst};
    }
    return best;
}

// ---------------------------------------------------------------------------
// Separable trigonometric fields and their integrals

enum class Trig : std::uint8_t { S = 0, C = 1 };

/// amp * tx(jx pi x / L) * tz(kz pi z)
struct SepTerm {
    double amp = 0.0;
    Trig tx = Trig::C;
    int jx = 0;
    Trig tz = Trig::C;
    int kz = 0;
};

inline SepTerm dx(const SepTerm& s, double L) {
    const double w = s.jx * pi / L;
    return s.tx == Trig::S ? SepTerm{s.amp * w, Trig::C, s.jx, s.tz, s.kz}
                           : SepTerm{-s.amp * w, Trig::S, s.jx, s.tz, s.kz};
}

inline SepTerm dz(const SepTerm& s) {
    const double w = s.kz * pi;
    return s.tz == Trig::S ? SepTerm{s.amp * w, s.tx, s.jx, Trig::C, s.kz}
                           : SepTerm{-s.amp * w, s.tx, s.jx, Trig::S, s.kz};
}

struct ModeField {
    SepTerm u, w, th;
};

inline ModeField field_of(const Eigenmode& e) {
    ModeField f;
    f.u = {e.a, Trig::S, e.j, Trig::C, e.k};
    f.w = {e.b, Trig::C, e.j, Trig::S, e.k};
    f.th = {e.c, Trig::C, e.j, Trig::S, e.k};
    return f;
}

/// Composite 30-point Gauss-Legendre tables of
/// int_0^len t1(f1 pi y/len) t2(f2 pi y/len) t3(f3 pi y/len) dy for f <= fmax.
class TrigTable {
public:
    TrigTable() = default;
    TrigTable(double len, int fmax, int panels) : len_(len), fmax_(fmax), panels_(panels) { build(); }

    /// Panels keeping at most ~12 radians of total phase per 30-point panel.
    static int default_panels(int fmax) { return 1 + static_cast<int>(std::ceil(3.0 * fmax * pi / 12.0)); }

    int fmax() const { return fmax_; }
    int panels() const { return panels_; }

    double operator()(Trig t1, int f1, Trig t2, int f2, Trig t3, int f3) const {
        return table_[index(t1, f1, t2, f2, t3, f3)];
    }

    const std::vector<double>& values() const { return table_; }

    std::vector<double> nodes, weights;

private:
    double len_ = 1.0;
    int fmax_ = 0;
    int panels_ = 1;
    std::vector<double> table_;

    std::size_t slot(Trig t, int f) const { return static_cast<std::size_t>(f) * 2 + static_cast<std::size_t>(t); }
    std::size_t index(Trig t1, int f1, Trig t2, int f2, Trig t3, int f3) const {
        const std::size_t m = 2 * static_cast<std::size_t>(fmax_ + 1);
        return (slot(t1, f1) * m + slot(t2, f2)) * m + slot(t3, f3);
    }

    void build() {
        using rule = boost::math::quadrature::gauss<double, 30>;
        const auto& x = rule::abscissa();
        const auto& w = rule::weights();
        const double h = len_ / panels_;
        for (int p = 0; p < panels_; ++p) {
            const double mid = (p + 0.5) * h;
            for (std::size_t i = 0; i < x.size(); ++i)
                for (int s : {-1, 1}) {
                    nodes.push_back(mid + s * 0.5 * h * x[i]);
                    weights.push_back(0.5 * h * w[i]);
                }
        }
        const std::size_t m = 2 * static_cast<std::size_t>(fmax_ + 1);
        std::vector<double> vals(m * nodes.size());
        for (int f = 0; f <= fmax_; ++f)
            for (std::size_t q = 0; q < nodes.size(); ++q) {
                const double arg = f * pi * nodes[q] / len_;
                vals[slot(Trig::S, f) * nodes.size() + q] = std::sin(arg);
                vals[slot(Trig::C, f) * nodes.size() + q] = std::cos(arg);
            }
        table_.assign(m * m * m, 0.0);
        for (std::size_t a = 0; a < m; ++a)
            for (std::size_t b = a; b < m; ++b)
                for (std::size_t c = b; c < m; ++c) {
                    double s = 0.0;
                    for (std::size_t q = 0; q < nodes.size(); ++q)
                        s += weights[q] * vals[a * nodes.size() + q] * vals[b * nodes.size() + q] *
                             vals[c * nodes.size() + q];
                    for (auto [i, j, k] : {std::tuple{a, b, c}, {a, c, b}, {b, a, c}, {b, c, a}, {c, a, b}, {c, b, a}})
                        table_[(i * m + j) * m + k] = s;
                }
    }
};

/// x- and z-tables for one truncation, with the change observed under refinement.
struct TrigQuadrature {
    double L = 1.0;
    TrigTable x, z;
    double refinement_delta = 0.0;

    TrigQuadrature() = default;
    TrigQuadrature(double L_, int jmax, int kmax) : L(L_) {
        const int fx = std::max(1, jmax), fz = std::max(1, kmax);
        x = TrigTable(L, fx, TrigTable::default_panels(fx));
        z = TrigTable(1.0, fz, TrigTable::default_panels(fz));
        const TrigTable x2(L, fx, TrigTable::default_panels(fx) + 2);
        const TrigTable z2(1.0, fz, TrigTable::default_panels(fz) + 2);
        for (std::size_t i = 0; i < x.values().size(); ++i)
            refinement_delta = std::max(refinement_delta, std::abs(x.values()[i] - x2.values()[i]));
        for (std::size_t i = 0; i < z.values().size(); ++i)
            refinement_delta = std::max(refinement_delta, std::abs(z.values()[i] - z2.values()[i]));
    }

    double triple(const SepTerm& p, const SepTerm& q, const SepTerm& r) const {
        if (p.amp == 0.0 || q.amp == 0.0 || r.amp == 0.0) return 0.0;
        return p.amp * q.amp * r.amp * x(p.tx, p.jx, q.tx, q.jx, r.tx, r.jx) * z(p.tz, p.kz, q.tz, q.kz, r.tz, r.kz);
    }

    double pair(const SepTerm& p, const SepTerm& q) const { return triple(p, q, SepTerm{1.0, Trig::C, 0, Trig::C, 0}); }

    double inner(const Eigenmode& e1, const Eigenmode& e2) const {
        const auto f = field_of(e1), g = field_of(e2);
        return pair(f.u, g.u) + pair(f.w, g.w) + pair(f.th, g.th);
    }

    /// <B(e_nu, e_mu), e_l> with B(psi1, psi2) = -((u1.grad) u2, (u1.grad) theta2).
    double interaction(const Eigenmode& nu, const Eigenmode& mu, const Eigenmode& l) const {
        const auto f = field_of(nu), g = field_of(mu), h = field_of(l);
        double s = triple(f.u, dx(g.u, L), h.u) + triple(f.w, dz(g.u), h.u);
        s += triple(f.u, dx(g.w, L), h.w) + triple(f.w, dz(g.w), h.w);
        s += triple(f.u, dx(g.th, L), h.th) + triple(f.w, dz(g.th), h.th);
        return -s;
    }
};

inline constexpr double kQuadratureTolerance = 1e-9;

struct InteractionValue {
    double value = 0.0;
    double refinement_delta = 0.0;
    bool insufficient = false;
};

/// Single coefficient B^{m3}_{m1 m2} by quadrature, with the refinement check.
inline InteractionValue interaction_coeff(const Eigenmode& m1, const Eigenmode& m2, const Eigenmode& m3, double L) {
    const int jmax = std::max({m1.j, m2.j, m3.j, 1});
    const int kmax = std::max({m1.k, m2.k, m3.k, 1});
    const TrigQuadrature q(L, jmax, kmax);
    InteractionValue v;
    v.value = q.interaction(m1, m2, m3);
    v.refinement_delta = q.refinement_delta;
    v.insufficient = q.refinement_delta > kQuadratureTolerance;
    return v;
}

// ---------------------------------------------------------------------------
// Galerkin system

struct TensorEntry {
    std::uint32_t l, nu, mu;
    double value;
};

struct GramBlock {
    std::size_t plus, minus;
    double cross;  ///< <e+, e->
};

struct SpectralState {
    std::vector<double> c;
    double t = 0.0;
};

struct GalerkinSystem {
    RbcParams params;
    int j_max = 0, k_max = 0;
    std::vector<Eigenmode> modes;
    std::vector<double> beta;
    std::vector<TensorEntry> entries;  ///< every selection-rule-compatible triple
    std::vector<TensorEntry> active;   ///< nonzero B^l_{nu mu} + B^l_{mu nu} for nu <= mu (halved on the diagonal)
    std::vector<GramBlock> gram;
    std::size_t lead = 0;     ///< e^+_{j_c 1}
    std::size_t slaved = 0;   ///< e_{02}
    double antisymmetry_error = 0.0;
    double refinement_delta = 0.0;
    bool nonlinear_enabled = true;

    std::size_t size() const noexcept { return modes.size(); }

    std::size_t index_of(Group g, int j, int k, int sign) const {
        for (std::size_t i = 0; i < modes.size(); ++i)
            if (modes[i].group == g && modes[i].j == j && modes[i].k == k && modes[i].sign == sign) return i;
        throw std::out_of_range("mode not in truncation");
    }

    double coeff(std::size_t l, std::size_t nu, std::size_t mu) const {
        const auto key = std::tuple(static_cast<std::uint32_t>(l), static_cast<std::uint32_t>(nu), static_cast<std::uint32_t>(mu));
        const auto it = std::lower_bound(entries.begin(), entries.end(), key, [](const TensorEntry& e, const auto& k) {
            return std::tuple(e.l, e.nu, e.mu) < k;
        });
        if (it != entries.end() && std::tuple(it->l, it->nu, it->mu) == key) return it->value;
        return 0.0;
    }

    /// out_l = sum_{nu,mu} B^l_{nu mu} c_nu c_mu.
    void nonlinear(const std::vector<double>& c, std::vector<double>& out) const {
        std::fill(out.begin(), out.end(), 0.0);
        if (!nonlinear_enabled) return;
        for (const auto& e : active) out[e.l] += e.value * (c[e.nu] * c[e.mu]);
    }

    /// <u, u> with the stored cross terms of the +/- blocks.
    double norm(const std::vector<double>& c) const {
        double s = 0.0;
        for (double v : c) s += v * v;
        for (const auto& g : gram) s += 2.0 * g.cross * c[g.plus] * c[g.minus];
        return std::sqrt(std::max(0.0, s));
    }

    /// Coefficients from inner products <u, e_i> by inverting the Gram blocks.
    std::vector<double> coefficients_from_inner(const std::vector<double>& ip) const {
        std::vector<double> c = ip;
        for (const auto& g : gram) {
            const double det = 1.0 - g.cross * g.cross;
            c[g.plus] = (ip[g.plus] - g.cross * ip[g.minus]) / det;
            c[g.minus] = (ip[g.minus] - g.cross * ip[g.plus]) / det;
        }
        return c;
    }
};

/// Number of selection-rule-compatible (l, nu, mu) triples: nu in group two, and
/// both the horizontal and vertical indices of l equal the sum or the difference
/// of those of nu and mu.
inline bool selection_compatible(const Eigenmode& nu, const Eigenmode& mu, const Eigenmode& l) {
    if (nu.group != Group::two) return false;
    const bool jx = l.j == nu.j + mu.j || l.j == std::abs(nu.j - mu.j);
    const bool kz = l.k == nu.k + mu.k || l.k == std::abs(nu.k - mu.k);
    return jx && kz;
}

inline GalerkinSystem assemble_galerkin(const RbcParams& p, int j_max, int k_max) {
    p.validate();
    const auto cr = critical_rayleigh(p.L);
    if (cr.j_c > j_max) throw std::invalid_argument("truncation excludes the critical mode");
    if (k_max < 2) throw std::invalid_argument("truncation excludes the slaved mode (0,2)");
    GalerkinSystem s;
    s.params = p;
    s.j_max = j_max;
    s.k_max = k_max;
    s.modes = eigen_spectrum(p, j_max, k_max);
    for (const auto& m : s.modes) s.beta.push_back(m.beta);
    s.lead = s.index_of(Group::two, cr.j_c, 1, 1);
    s.slaved = s.index_of(Group::one, 0, 2, 0);

    std::unordered_map<long, std::vector<std::size_t>> by_jk;
    for (std::size_t i = 0; i < s.modes.size(); ++i) by_jk[s.modes[i].j * 1000L + s.modes[i].k].push_back(i);

    const TrigQuadrature q(p.L, j_max, k_max);
    s.refinement_delta = q.refinement_delta;
    for (std::size_t nu = 0; nu < s.size(); ++nu) {
        if (s.modes[nu].group != Group::two) continue;
        for (std::size_t mu = 0; mu < s.size(); ++mu) {
            const auto& a = s.modes[nu];
            const auto& b = s.modes[mu];
            std::vector<int> js{a.j + b.j, std::abs(a.j - b.j)}, ks{a.k + b.k, std::abs(a.k - b.k)};
            std::sort(js.begin(), js.end());
            js.erase(std::unique(js.begin(), js.end()), js.end());
            std::sort(ks.begin(), ks.end());
            ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
            for (int j : js)
                for (int k : ks) {
                    const auto it = by_jk.find(j * 1000L + k);
                    if (it == by_jk.end()) continue;
                    for (std::size_t l : it->second)
                        s.entries.push_back({static_cast<std::uint32_t>(l), static_cast<std::uint32_t>(nu),
                                             static_cast<std::uint32_t>(mu), q.interaction(a, b, s.modes[l])});
                }
        }
    }
    std::sort(s.entries.begin(), s.entries.end(), [](const TensorEntry& x, const TensorEntry& y) {
        return std::tuple(x.l, x.nu, x.mu) < std::tuple(y.l, y.nu, y.mu);
    });
    double scale = 0.0;
    for (const auto& e : s.entries) scale = std::max(scale, std::abs(e.value));
    std::map<std::tuple<std::uint32_t, std::uint32_t, std::uint32_t>, double> sym;
    for (const auto& e : s.entries) {
        s.antisymmetry_error = std::max(s.antisymmetry_error, std::abs(e.value + s.coeff(e.mu, e.nu, e.l)));
        sym[{e.l, std::min(e.nu, e.mu), std::max(e.nu, e.mu)}] += e.value;
    }
    for (const auto& [key, v] : sym)
        if (std::abs(v) > 1e-13 * scale) s.active.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), v});
    for (std::size_t i = 0; i < s.size(); ++i) {
        const auto& m = s.modes[i];
        if (m.group != Group::two || m.sign != 1) continue;
        const std::size_t minus = s.index_of(Group::two, m.j, m.k, -1);
        s.gram.push_back({i, minus, q.inner(m, s.modes[minus])});
    }
    return s;
}

inline constexpr double kSpdeOverflow = 1e6;

/// One Heun-Stratonovich step of dc = (Lambda c + B[c,c]) dt + sigma c o dW.
inline void step_spde(const GalerkinSystem& sys, SpectralState& st, double dW, double dt, HeunWorkspace& ws) {
    if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
    const double sigma = sys.params.sigma;
    auto f = [&](const std::vector<double>& c, std::vector<double>& out) {
        sys.nonlinear(c, out);
        for (std::size_t i = 0; i < c.size(); ++i) out[i] += sys.beta[i] * c[i];
    };
    auto G = [&](const std::vector<double>& c, std::vector<double>& out) {
        for (std::size_t i = 0; i < c.size(); ++i) out[i] = sigma * c[i];
    };
    heun_step(st.c, dt, dW, f, G, ws);
    st.t += dt;
    for (double v : st.c)
        if (!std::isfinite(v) || std::abs(v) > kSpdeOverflow)
            throw std::overflow_error("spectral state overflow at t=" + std::to_string(st.t));
}

inline SpectralState step_spde(const GalerkinSystem& sys, const SpectralState& st, double dW, double dt) {
    SpectralState out = st;
    HeunWorkspace ws;
    step_spde(sys, out, dW, dt, ws);
    return out;
}

/// X e^+_{j_c 1} + B^2_{11} M_2 X^2 e_{02}.
inline SpectralState lift_reduced(double X, double M2, const GalerkinSystem& sys) {
    SpectralState st;
    st.c.assign(sys.size(), 0.0);
    st.c[sys.lead] = X;
    st.c[sys.slaved] = reduced_rbc_coeffs(sys.params.L, sys.params.Ra).B2_11 * M2 * X * X;
    return st;
}

// Experiments

struct ErrorConfig {
    double L = 3.0;
    std::vector<double> dRa_grid{4.0, 8.0, 16.0, 32.0};
    std::size_t samples = 200;
    int j_max = 6, k_max = 6;
    double dt = 1e-3;
    double T = 1.0;           ///< runs cover [0, eta T / dRa] with eta = 1 / epsilon_slope(L)
    double x0_scale = 1.0;    ///< x(0) = x0_scale sqrt(eps)
    double sigma_scale = 1.0; ///< sigma = sigma_scale sqrt(eps)
    double tol = 1e-8;
    std::uint64_t seed = 1;
    std::size_t workers = 1;
};

struct ErrorRow {
    double dRa = 0.0;
    double epsilon = 0.0;
    std::size_t sample = 0;
    double sup_abs_a = 0.0;
    double sup_norm_b = 0.0;
    std::string status = "ok";
};

struct ErrorSummary {
    double dRa = 0.0;
    double epsilon = 0.0;
    double median_a = 0.0;
    double median_b = 0.0;
    double q90_a = 0.0;
    double q90_b = 0.0;
    std::size_t ok = 0;
};

struct ErrorReport {
    std::vector<ErrorRow> rows;
    std::vector<ErrorSummary> summary;
    LinearFit fit_a, fit_b;  ///< log-log of medians vs epsilon
    std::vector<std::string> warnings;
};

/// Galerkin solution and reduced solution on one path from
/// x(0) = X(0) = x0_scale sqrt(eps), u_s(0) = Phi(X(0), 0); returns sup |a| and sup |b|.
inline ErrorRow error_sample(const GalerkinSystem& sys, const ErrorConfig& cfg, double dRa, std::size_t sample) {
    ErrorRow row;
    row.dRa = dRa;
    row.sample = sample;
    const double Ra = sys.params.Ra;
    const double eps = epsilon_of_ra(cfg.L, Ra);
    row.epsilon = eps;
    const auto rc = rbc_reduced_system(cfg.L, Ra, sys.params.sigma);
    const double t_end = std::ceil(cfg.T / (epsilon_slope(cfg.L) * dRa) / cfg.dt) * cfg.dt;
    const double T_pre = reduced_prehistory(rc, cfg.tol);
    const auto path = sample_brownian(-(std::ceil(T_pre / cfg.dt) + 1.0) * cfg.dt, t_end, cfg.dt, cfg.seed, sample);
    const double X0 = cfg.x0_scale * std::sqrt(eps);
    const auto tr = integrate_reduced(rc, path, X0, t_end, cfg.dt, cfg.tol);
    const double B2 = rc.b11[0];

    SpectralState st = lift_reduced(X0, tr.states[0].m[0], sys);
    HeunWorkspace ws;
    std::vector<double> bvec(sys.size());
    auto measure = [&](std::size_t k) {
        const auto& r = tr.states[k];
        row.sup_abs_a = std::max(row.sup_abs_a, std::abs(st.c[sys.lead] - r.X));
        bvec = st.c;
        bvec[sys.lead] = 0.0;
        bvec[sys.slaved] -= B2 * r.m[0] * r.X * r.X;
        row.sup_norm_b = std::max(row.sup_norm_b, sys.norm(bvec));
    };
    measure(0);
    for (std::size_t k = 0; k + 1 < tr.states.size(); ++k) {
        const std::size_t i = path.zero_index + k;
        step_spde(sys, st, path.dW(i), cfg.dt, ws);
        measure(k + 1);
    }
    return row;
}

inline ErrorReport error_experiment(const ErrorConfig& cfg) {
    const auto cr = critical_rayleigh(cfg.L);
    ErrorReport rep;
    std::vector<GalerkinSystem> systems;
    for (double d : cfg.dRa_grid) {
        if (!(d > 0.0)) throw std::invalid_argument("error experiment needs dRa > 0");
        const double Ra = cr.Ra_c + d;
        const double eps = epsilon_of_ra(cfg.L, Ra);
        const double sigma = cfg.sigma_scale * std::sqrt(eps);
        if (std::abs(cfg.sigma_scale - 1.0) > 1e-12)
            rep.warnings.push_back("sigma != sqrt(epsilon) at dRa=" + std::to_string(d));
        systems.push_back(assemble_galerkin({cfg.L, Ra, sigma}, cfg.j_max, cfg.k_max));
    }
    const std::size_t G = cfg.dRa_grid.size();
    rep.rows.resize(G * cfg.samples);
    parallel_for(rep.rows.size(), cfg.workers, [&](std::size_t t) {
        const std::size_t g = t / cfg.samples, k = t % cfg.samples;
        try {
            rep.rows[t] = error_sample(systems[g], cfg, cfg.dRa_grid[g], k);
        } catch (const std::exception& e) {
            rep.rows[t].dRa = cfg.dRa_grid[g];
            rep.rows[t].epsilon = epsilon_of_ra(cfg.L, systems[g].params.Ra);
            rep.rows[t].sample = k;
            rep.rows[t].status = std::string("failed: ") + e.what();
        }
    });
    std::vector<double> xs, ya, yb;
    for (std::size_t g = 0; g < G; ++g) {
        std::vector<double> a, b;
        for (std::size_t k = 0; k < cfg.samples; ++k) {
            const auto& r = rep.rows[g * cfg.samples + k];
            if (r.status != "ok") continue;
            a.push_back(r.sup_abs_a);
            b.push_back(r.sup_norm_b);
        }
        ErrorSummary s;
        s.dRa = cfg.dRa_grid[g];
        s.epsilon = epsilon_of_ra(cfg.L, cr.Ra_c + s.dRa);
        s.ok = a.size();
        if (!a.empty()) {
            s.median_a = median(a);
            s.median_b = median(b);
            s.q90_a = quantile(a, 0.9);
            s.q90_b = quantile(b, 0.9);
            xs.push_back(s.epsilon);
            ya.push_back(s.median_a);
            yb.push_back(s.median_b);
        }
        rep.summary.push_back(s);
    }
    if (xs.size() >= 3) {
        rep.fit_a = fit_loglog(xs, ya);
        rep.fit_b = fit_loglog(xs, yb);
    }
    return rep;
}

struct BifurcationConfig {
    double L = 3.0;
    std::vector<double> dRa_grid{-2.0, 0.0, 2.0, 4.0, 8.0, 16.0};
    std::size_t samples = 2000;
    double sigma = 0.01;
    double bandwidth = 0.0;  ///< 0 selects Silverman's rule
    std::size_t grid_points = 401;
    double dt = 2e-3;
    double tol = 1e-6;
    std::uint64_t seed = 1;
    std::size_t workers = 1;
};

struct PdfRow {
    double dRa = 0.0;
    double epsilon = 0.0;
    double x = 0.0;
    double density = 0.0;
    bool point_mass = false;
};

struct BifurcationCurveRow {
    double dRa = 0.0;
    double epsilon = 0.0;
    double most_probable = 0.0;
    double median_abs = 0.0;
    double bandwidth = 0.0;
};

struct BifurcationReport {
    std::vector<PdfRow> pdf;
    std::vector<BifurcationCurveRow> curve;
    std::vector<std::vector<double>> amplitudes;  ///< per grid point, one per sample (empty for dRa <= 0)
    LinearFit fit;  ///< log most-probable |X| vs log dRa
};

/// Stationary amplitude at t = 0 for one sample: a_eps with g = 2 eps - beta_{02}.
inline double bifurcation_sample(const BifurcationConfig& cfg, double Ra, std::size_t sample) {
    const double eps = epsilon_of_ra(cfg.L, Ra);
    const double alpha = reduced_rbc_coeffs(cfg.L, Ra).alpha;
    const double g = 2.0 * eps - beta_group_one(2);
    const double T_trunc = std::log(1.0 / cfg.tol) / (2.0 * eps);
    const double T_pre = mterm_prehistory({g, cfg.sigma}, cfg.tol);
    const double t0 = -(std::ceil((T_trunc + T_pre) / cfg.dt) + 2.0) * cfg.dt;
    const auto path = sample_brownian(t0, 0.0, cfg.dt, cfg.seed, sample);
    return stationary_amplitude(eps, alpha, cfg.sigma, g, path, 0.0, cfg.tol);
}

inline BifurcationReport bifurcation_pdf(const BifurcationConfig& cfg) {
    const auto cr = critical_rayleigh(cfg.L);
    BifurcationReport rep;
    const std::size_t G = cfg.dRa_grid.size();
    rep.amplitudes.assign(G, {});
    std::vector<std::pair<std::size_t, std::size_t>> tasks;
    for (std::size_t g = 0; g < G; ++g) {
        if (cfg.dRa_grid[g] <= 0.0) continue;
        rep.amplitudes[g].assign(cfg.samples, 0.0);
        for (std::size_t k = 0; k < cfg.samples; ++k) tasks.emplace_back(g, k);
    }
    parallel_for(tasks.size(), cfg.workers, [&](std::size_t t) {
        const auto [g, k] = tasks[t];
        rep.amplitudes[g][k] = bifurcation_sample(cfg, cr.Ra_c + cfg.dRa_grid[g], k);
    });
    std::vector<double> xs, ys;
    for (std::size_t g = 0; g < G; ++g) {
        const double d = cfg.dRa_grid[g];
        const double eps = epsilon_of_ra(cfg.L, cr.Ra_c + d);
        if (d <= 0.0) {
            rep.pdf.push_back({d, eps, 0.0, std::numeric_limits<double>::infinity(), true});
            rep.curve.push_back({d, eps, 0.0, 0.0, 0.0});
            continue;
        }
        const auto& a = rep.amplitudes[g];
        std::vector<double> both;
        both.reserve(2 * a.size());
        for (double v : a) {
            both.push_back(v);
            both.push_back(-v);
        }
        const double h = cfg.bandwidth > 0.0 ? cfg.bandwidth : silverman_bandwidth(a);
        const double amax = *std::max_element(a.begin(), a.end());
        const double xmax = amax + 4.0 * h;
        std::vector<double> grid(cfg.grid_points);
        for (std::size_t i = 0; i < grid.size(); ++i)
            grid[i] = -xmax + 2.0 * xmax * static_cast<double>(i) / static_cast<double>(grid.size() - 1);
        const auto dens = kde(both, grid, h);
        for (std::size_t i = 0; i < grid.size(); ++i) rep.pdf.push_back({d, eps, grid[i], dens[i], false});
        std::vector<double> pos_grid, pos_dens;
        for (std::size_t i = 0; i < grid.size(); ++i)
            if (grid[i] > 0.0) {
                pos_grid.push_back(grid[i]);
                pos_dens.push_back(dens[i]);
            }
        const double mode = kde_mode(pos_grid, pos_dens);
        rep.curve.push_back({d, eps, mode, median(a), h});
        xs.push_back(d);
        ys.push_back(mode);
    }
    if (xs.size() >= 3) rep.fit = fit_loglog(xs, ys);
    return rep;
}

}  // namespace manifold::rbc
