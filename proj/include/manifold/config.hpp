#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <json.hpp>

namespace manifold {

using json = nlohmann::json;

struct ConfigParseError : std::runtime_error {
    std::size_t line = 0, column = 0;
    ConfigParseError(const std::string& what, std::size_t l, std::size_t c)
        : std::runtime_error("parse error at line " + std::to_string(l) + ", column " + std::to_string(c) + ": " +
                             what),
          line(l),
          column(c) {}
};

struct ConfigValidationError : std::runtime_error {
    std::string field;
    ConfigValidationError(std::string f, const std::string& what)
        : std::runtime_error("invalid field \"" + f + "\": " + what), field(std::move(f)) {}
};

struct MTermCase {
    double g = 1.0;
    double sigma_eff = 0.5;
};

struct MTermStatsParams {
    std::vector<MTermCase> cases{{2.0, 1.0}, {1.0, 0.25}, {1.0, 0.5}, {1.0, 0.75}};
    double T = 1e4;              ///< ergodic horizon
    double dt = 1e-3;
    std::size_t samples = 10000; ///< independent stationary draws
    double max_lag = 2.0;        ///< ACF fit window
    double tol = 1e-8;
};

struct AbCompareParams {
    double lambda = 0.1, kappa = -1.0, sigma = 0.3, A0 = 0.3, B0 = -0.075;
    std::size_t samples = 200;
    double T = 100.0;
    double dt = 1e-3;
    double tol = 1e-8;
    std::vector<double> snapshot_times{25.0, 50.0, 75.0};
    std::size_t snapshot_points = 41;
};

struct RbcSpectrumParams {
    double L = 3.0;
    double dRa = 0.0;  ///< Ra = Ra_c + dRa
    int jmax = 6, kmax = 6;
};

struct RbcBifurcationParams {
    double L = 3.0;
    std::vector<double> dRa_grid{-2.0, 0.0, 2.0, 4.0, 8.0, 16.0};
    std::size_t samples = 2000;
    double sigma = 0.01;
    double bandwidth = 0.0;  ///< 0 selects Silverman's rule
    std::size_t grid_points = 401;
    double dt = 2e-3;
    double tol = 1e-6;
};

struct RbcErrorParams {
    double L = 3.0;
    std::vector<double> dRa_grid{4.0, 8.0, 16.0, 32.0};
    std::size_t samples = 200;
    int jmax = 6, kmax = 6;
    double dt = 1e-3;
    double T = 1.0;  ///< slow time; horizon eta T / dRa
    double x0_scale = 1.0;
    double sigma_scale = 1.0;
    double tol = 1e-8;
};

struct ResidualScalingParams {
    std::vector<double> epsilons{0.02, 0.04, 0.08, 0.16};
    std::size_t samples = 200;
    double T = 1.0;
    double x0_scale = 1.0;
    double dt = 0.0;  ///< 0 selects the default step
    double tol = 1e-8;
};

struct AprioriParams {
    double epsilon = 0.05;
    double T = 1.0;
    double chi = 0.1;
    std::size_t samples = 500;
    double x0_scale = 1.0;
    double dt = 0.0;
    double tol = 1e-8;
    bool doubling = true;  ///< also run 2*samples and report the relative change of C
};

inline const std::vector<std::string>& experiment_ids() {
    static const std::vector<std::string> ids{"mterm-stats",     "ab-compare",        "rbc-spectrum",
                                              "rbc-bifurcation", "rbc-error-scaling", "residual-scaling",
                                              "apriori-check"};
    return ids;
}

struct ExperimentConfig {
    std::string experiment;
    std::uint64_t seed = 1;
    std::size_t workers = 1;
    std::string output_dir = "out";
    MTermStatsParams mterm;
    AbCompareParams ab;
    RbcSpectrumParams spectrum;
    RbcBifurcationParams bifurcation;
    RbcErrorParams error;
    ResidualScalingParams residual;
    AprioriParams apriori;
};

namespace detail {

/// Reads keys from one JSON object, remembering which were consumed.
class ObjectReader {
public:
    ObjectReader(const json& obj, std::string prefix) : obj_(obj), prefix_(std::move(prefix)) {
        if (!obj_.is_object()) throw ConfigValidationError(prefix_.empty() ? "<root>" : prefix_, "expected an object");
    }

    std::string name(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

    template <class T>
    void get(const std::string& key, T& out) {
        seen_.insert(key);
        const auto it = obj_.find(key);
        if (it == obj_.end()) return;
        try {
            if constexpr (std::is_same_v<T, double>) {
                if (!it->is_number()) throw ConfigValidationError(name(key), "expected a number");
                out = it->template get<double>();
            } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
                if (!it->is_number_integer()) throw ConfigValidationError(name(key), "expected an integer");
                if constexpr (std::is_unsigned_v<T>)
                    if (!it->is_number_unsigned()) throw ConfigValidationError(name(key), "must be non-negative");
                out = it->template get<T>();
            } else if constexpr (std::is_same_v<T, bool>) {
                if (!it->is_boolean()) throw ConfigValidationError(name(key), "expected a boolean");
                out = it->template get<bool>();
            } else if constexpr (std::is_same_v<T, std::string>) {
                if (!it->is_string()) throw ConfigValidationError(name(key), "expected a string");
                out = it->template get<std::string>();
            } else if constexpr (std::is_same_v<T, std::vector<double>>) {
                if (!it->is_array()) throw ConfigValidationError(name(key), "expected an array of numbers");
                out.clear();
                for (const auto& v : *it) {
                    if (!v.is_number()) throw ConfigValidationError(name(key), "expected an array of numbers");
                    out.push_back(v.template get<double>());
                }
            } else {
                static_assert(sizeof(T) == 0, "unsupported field type");
            }
        } catch (const json::exception& e) {
            throw ConfigValidationError(name(key), e.what());
        }
    }

    const json* child(const std::string& key) {
        seen_.insert(key);
        const auto it = obj_.find(key);
        return it == obj_.end() ? nullptr : &*it;
    }

    void finish() const {
        for (const auto& [k, v] : obj_.items())
            if (!seen_.count(k)) throw ConfigValidationError(name(k), "unknown key");
    }

private:
    const json& obj_;
    std::string prefix_;
    std::set<std::string> seen_;
};

inline void require(bool ok, const std::string& field, const std::string& what) {
    if (!ok) throw ConfigValidationError(field, what);
}

inline void positive(double v, const std::string& field) {
    require(std::isfinite(v) && v > 0.0, field, "must be positive");
}

inline void non_empty(const std::vector<double>& v, const std::string& field) {
    require(!v.empty(), field, "must be non-empty");
    for (double x : v) require(std::isfinite(x), field, "entries must be finite");
}

inline std::pair<std::size_t, std::size_t> line_column(const std::string& text, std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

inline void read_params(const json& obj, const std::string& id, ExperimentConfig& c) {
    ObjectReader r(obj, "params");
    if (id == "mterm-stats") {
        auto& p = c.mterm;
        if (const json* cases = r.child("cases")) {
            if (!cases->is_array()) throw ConfigValidationError("params.cases", "expected an array");
            p.cases.clear();
            for (std::size_t i = 0; i < cases->size(); ++i) {
                ObjectReader cr((*cases)[i], "params.cases[" + std::to_string(i) + "]");
                MTermCase mc;
                cr.get("g", mc.g);
                cr.get("sigma_eff", mc.sigma_eff);
                cr.finish();
                p.cases.push_back(mc);
            }
        }
        r.get("T", p.T);
        r.get("dt", p.dt);
        r.get("samples", p.samples);
        r.get("max_lag", p.max_lag);
        r.get("tol", p.tol);
    } else if (id == "ab-compare") {
        auto& p = c.ab;
        r.get("lambda", p.lambda);
        r.get("kappa", p.kappa);
        r.get("sigma", p.sigma);
        r.get("A0", p.A0);
        r.get("B0", p.B0);
        r.get("samples", p.samples);
        r.get("T", p.T);
        r.get("dt", p.dt);
        r.get("tol", p.tol);
        r.get("snapshot_times", p.snapshot_times);
        r.get("snapshot_points", p.snapshot_points);
    } else if (id == "rbc-spectrum") {
        auto& p = c.spectrum;
        r.get("L", p.L);
        r.get("dRa", p.dRa);
        r.get("jmax", p.jmax);
        r.get("kmax", p.kmax);
    } else if (id == "rbc-bifurcation") {
        auto& p = c.bifurcation;
        r.get("L", p.L);
        r.get("dRa_grid", p.dRa_grid);
        r.get("samples", p.samples);
        r.get("sigma", p.sigma);
        r.get("bandwidth", p.bandwidth);
        r.get("grid_points", p.grid_points);
        r.get("dt", p.dt);
        r.get("tol", p.tol);
    } else if (id == "rbc-error-scaling") {
        auto& p = c.error;
        r.get("L", p.L);
        r.get("dRa_grid", p.dRa_grid);
        r.get("samples", p.samples);
        r.get("jmax", p.jmax);
        r.get("kmax", p.kmax);
        r.get("dt", p.dt);
        r.get("T", p.T);
        r.get("x0_scale", p.x0_scale);
        r.get("sigma_scale", p.sigma_scale);
        r.get("tol", p.tol);
    } else if (id == "residual-scaling") {
        auto& p = c.residual;
        r.get("epsilons", p.epsilons);
        r.get("samples", p.samples);
        r.get("T", p.T);
        r.get("x0_scale", p.x0_scale);
        r.get("dt", p.dt);
        r.get("tol", p.tol);
    } else if (id == "apriori-check") {
        auto& p = c.apriori;
        r.get("epsilon", p.epsilon);
        r.get("T", p.T);
        r.get("chi", p.chi);
        r.get("samples", p.samples);
        r.get("x0_scale", p.x0_scale);
        r.get("dt", p.dt);
        r.get("tol", p.tol);
        r.get("doubling", p.doubling);
    }
    r.finish();
}

inline void tolerance(double tol, const std::string& field) {
    require(std::isfinite(tol) && tol > 0.0 && tol < 1.0, field, "must lie in (0,1)");
}

}  // namespace detail

/// Checks every field of the selected experiment. Errors name the offending field.
inline void validate(const ExperimentConfig& c) {
    using namespace detail;
    const auto& ids = experiment_ids();
    require(std::find(ids.begin(), ids.end(), c.experiment) != ids.end(), "experiment", "unknown experiment id");
    require(c.workers >= 1, "workers", "must be at least 1");
    require(!c.output_dir.empty(), "output_dir", "must be non-empty");
    const std::string& id = c.experiment;
    if (id == "mterm-stats") {
        const auto& p = c.mterm;
        require(!p.cases.empty(), "cases", "must be non-empty");
        for (std::size_t i = 0; i < p.cases.size(); ++i) {
            positive(p.cases[i].g, "cases[" + std::to_string(i) + "].g");
            require(std::isfinite(p.cases[i].sigma_eff), "cases[" + std::to_string(i) + "].sigma_eff", "must be finite");
        }
        positive(p.T, "T");
        positive(p.dt, "dt");
        require(p.samples >= 2, "samples", "must be at least 2");
        positive(p.max_lag, "max_lag");
        tolerance(p.tol, "tol");
    } else if (id == "ab-compare") {
        const auto& p = c.ab;
        positive(p.lambda, "lambda");
        require(p.kappa < 0.0, "kappa", "must be negative");
        require(p.sigma >= 0.0, "sigma", "must be non-negative");
        require(std::isfinite(p.A0), "A0", "must be finite");
        require(std::isfinite(p.B0), "B0", "must be finite");
        require(p.samples >= 1, "samples", "must be at least 1");
        positive(p.T, "T");
        positive(p.dt, "dt");
        tolerance(p.tol, "tol");
        for (double t : p.snapshot_times) require(t >= 0.0 && t <= p.T, "snapshot_times", "must lie in [0, T]");
        require(p.snapshot_points >= 2, "snapshot_points", "must be at least 2");
    } else if (id == "rbc-spectrum") {
        const auto& p = c.spectrum;
        positive(p.L, "L");
        require(std::isfinite(p.dRa), "dRa", "must be finite");
        require(p.jmax >= 1, "jmax", "must be at least 1");
        require(p.kmax >= 1, "kmax", "must be at least 1");
    } else if (id == "rbc-bifurcation") {
        const auto& p = c.bifurcation;
        positive(p.L, "L");
        non_empty(p.dRa_grid, "dRa_grid");
        require(p.samples >= 2, "samples", "must be at least 2");
        require(p.sigma >= 0.0, "sigma", "must be non-negative");
        require(p.bandwidth >= 0.0, "bandwidth", "must be non-negative");
        require(p.grid_points >= 3, "grid_points", "must be at least 3");
        positive(p.dt, "dt");
        tolerance(p.tol, "tol");
    } else if (id == "rbc-error-scaling") {
        const auto& p = c.error;
        positive(p.L, "L");
        non_empty(p.dRa_grid, "dRa_grid");
        for (double d : p.dRa_grid) require(d > 0.0, "dRa_grid", "entries must be positive");
        require(p.samples >= 1, "samples", "must be at least 1");
        require(p.jmax >= 1, "jmax", "must be at least 1");
        require(p.kmax >= 2, "kmax", "must be at least 2");
        positive(p.dt, "dt");
        positive(p.T, "T");
        require(std::isfinite(p.x0_scale), "x0_scale", "must be finite");
        require(p.sigma_scale >= 0.0, "sigma_scale", "must be non-negative");
        tolerance(p.tol, "tol");
    } else if (id == "residual-scaling") {
        const auto& p = c.residual;
        non_empty(p.epsilons, "epsilons");
        for (double e : p.epsilons) require(e > 0.0, "epsilons", "entries must be positive");
        require(p.samples >= 1, "samples", "must be at least 1");
        positive(p.T, "T");
        require(std::isfinite(p.x0_scale), "x0_scale", "must be finite");
        require(p.dt >= 0.0, "dt", "must be non-negative (0 selects the default)");
        tolerance(p.tol, "tol");
    } else if (id == "apriori-check") {
        const auto& p = c.apriori;
        positive(p.epsilon, "epsilon");
        positive(p.T, "T");
        require(p.chi > 0.0 && p.chi < 1.0, "chi", "must lie in (0,1)");
        require(p.samples >= 1, "samples", "must be at least 1");
        require(std::isfinite(p.x0_scale), "x0_scale", "must be finite");
        require(p.dt >= 0.0, "dt", "must be non-negative (0 selects the default)");
        tolerance(p.tol, "tol");
    }
}

inline ExperimentConfig parse_config_json(const json& doc) {
    ExperimentConfig c;
    detail::ObjectReader r(doc, "");
    r.get("experiment", c.experiment);
    if (c.experiment.empty()) throw ConfigValidationError("experiment", "missing");
    const auto& ids = experiment_ids();
    if (std::find(ids.begin(), ids.end(), c.experiment) == ids.end())
        throw ConfigValidationError("experiment", "unknown experiment id \"" + c.experiment + "\"");
    r.get("seed", c.seed);
    r.get("workers", c.workers);
    r.get("output_dir", c.output_dir);
    if (const json* params = r.child("params")) detail::read_params(*params, c.experiment, c);
    r.finish();
    validate(c);
    return c;
}

inline ExperimentConfig parse_config(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        const auto [line, col] = detail::line_column(text, e.byte);
        std::string msg = e.what();
        if (const auto pos = msg.find("syntax error"); pos != std::string::npos) msg = msg.substr(pos);
        throw ConfigParseError(msg, line, col);
    }
    return parse_config_json(doc);
}

/// Parameters of the selected experiment with every default filled in.
inline json params_json(const ExperimentConfig& c) {
    const std::string& id = c.experiment;
    json j = json::object();
    if (id == "mterm-stats") {
        const auto& p = c.mterm;
        json cases = json::array();
        for (const auto& mc : p.cases) cases.push_back({{"g", mc.g}, {"sigma_eff", mc.sigma_eff}});
        j = {{"cases", cases}, {"T", p.T}, {"dt", p.dt}, {"samples", p.samples}, {"max_lag", p.max_lag}, {"tol", p.tol}};
    } else if (id == "ab-compare") {
        const auto& p = c.ab;
        j = {{"lambda", p.lambda}, {"kappa", p.kappa},   {"sigma", p.sigma},
             {"A0", p.A0},         {"B0", p.B0},         {"samples", p.samples},
             {"T", p.T},           {"dt", p.dt},         {"tol", p.tol},
             {"snapshot_times", p.snapshot_times},       {"snapshot_points", p.snapshot_points}};
    } else if (id == "rbc-spectrum") {
        const auto& p = c.spectrum;
        j = {{"L", p.L}, {"dRa", p.dRa}, {"jmax", p.jmax}, {"kmax", p.kmax}};
    } else if (id == "rbc-bifurcation") {
        const auto& p = c.bifurcation;
        j = {{"L", p.L},         {"dRa_grid", p.dRa_grid},       {"samples", p.samples}, {"sigma", p.sigma},
             {"bandwidth", p.bandwidth}, {"grid_points", p.grid_points}, {"dt", p.dt},   {"tol", p.tol}};
    } else if (id == "rbc-error-scaling") {
        const auto& p = c.error;
        j = {{"L", p.L},       {"dRa_grid", p.dRa_grid}, {"samples", p.samples},   {"jmax", p.jmax},
             {"kmax", p.kmax}, {"dt", p.dt},             {"T", p.T},   {"x0_scale", p.x0_scale},
             {"sigma_scale", p.sigma_scale},             {"tol", p.tol}};
    } else if (id == "residual-scaling") {
        const auto& p = c.residual;
        j = {{"epsilons", p.epsilons}, {"samples", p.samples}, {"T", p.T},
             {"x0_scale", p.x0_scale}, {"dt", p.dt},           {"tol", p.tol}};
    } else if (id == "apriori-check") {
        const auto& p = c.apriori;
        j = {{"epsilon", p.epsilon}, {"T", p.T},   {"chi", p.chi},   {"samples", p.samples},
             {"x0_scale", p.x0_scale}, {"dt", p.dt}, {"tol", p.tol}, {"doubling", p.doubling}};
    }
    return j;
}

inline json to_json(const ExperimentConfig& c) {
    return {{"experiment", c.experiment},
            {"seed", c.seed},
            {"workers", c.workers},
            {"output_dir", c.output_dir},
            {"params", params_json(c)}};
}

/// Canonical text: sorted keys, two-space indent, every default present.
inline std::string serialize(const ExperimentConfig& c) { return to_json(c).dump(2) + "\n"; }

/// The canonical form of a document: parse, fill defaults, serialize.
inline std::string normalize(const std::string& text) { return serialize(parse_config(text)); }

}  // namespace manifold
