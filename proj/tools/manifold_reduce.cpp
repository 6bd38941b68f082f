#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "manifold/config.hpp"
#include "manifold/experiments.hpp"

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitCheckFailed = 3;

struct Overrides {
    std::string config_file;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> workers;
    std::optional<std::string> out;
    bool check = false;
    std::optional<double> L;
    std::vector<double> dRa_grid;
    std::optional<std::size_t> samples;
    std::optional<int> jmax, kmax;
    std::optional<double> dt;
};

void apply(const Overrides& o, manifold::ExperimentConfig& c) {
    if (o.seed) c.seed = *o.seed;
    if (o.workers) c.workers = *o.workers;
    if (o.out) c.output_dir = *o.out;
    const auto& id = c.experiment;
    if (id == "rbc-spectrum") {
        if (o.L) c.spectrum.L = *o.L;
        if (o.jmax) c.spectrum.jmax = *o.jmax;
        if (o.kmax) c.spectrum.kmax = *o.kmax;
    } else if (id == "rbc-bifurcation") {
        if (o.L) c.bifurcation.L = *o.L;
        if (!o.dRa_grid.empty()) c.bifurcation.dRa_grid = o.dRa_grid;
        if (o.samples) c.bifurcation.samples = *o.samples;
        if (o.dt) c.bifurcation.dt = *o.dt;
    } else if (id == "rbc-error-scaling") {
        if (o.L) c.error.L = *o.L;
        if (!o.dRa_grid.empty()) c.error.dRa_grid = o.dRa_grid;
        if (o.samples) c.error.samples = *o.samples;
        if (o.jmax) c.error.jmax = *o.jmax;
        if (o.kmax) c.error.kmax = *o.kmax;
        if (o.dt) c.error.dt = *o.dt;
    } else {
        if (o.L || !o.dRa_grid.empty() || o.jmax || o.kmax)
            throw manifold::ConfigValidationError("flags", "--L, --dRa-grid, --jmax, --kmax apply to rbc-* only");
        if (o.samples) {
            if (id == "mterm-stats") c.mterm.samples = *o.samples;
            if (id == "ab-compare") c.ab.samples = *o.samples;
            if (id == "residual-scaling") c.residual.samples = *o.samples;
            if (id == "apriori-check") c.apriori.samples = *o.samples;
        }
        if (o.dt) {
            if (id == "mterm-stats") c.mterm.dt = *o.dt;
            if (id == "ab-compare") c.ab.dt = *o.dt;
            if (id == "residual-scaling") c.residual.dt = *o.dt;
            if (id == "apriori-check") c.apriori.dt = *o.dt;
        }
    }
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + path);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

int run(const std::string& subcommand, const Overrides& o) {
    manifold::ExperimentConfig cfg;
    try {
        const std::string text = o.config_file.empty() ? "{\"experiment\": \"" + subcommand + "\"}" : read_file(o.config_file);
        cfg = manifold::parse_config(text);
        if (cfg.experiment != subcommand)
            throw manifold::ConfigValidationError("experiment", "config is for \"" + cfg.experiment +
                                                                    "\" but subcommand is \"" + subcommand + "\"");
        apply(o, cfg);
        manifold::validate(cfg);
    } catch (const manifold::ConfigParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const manifold::ConfigValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::runtime_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    }

    const auto res = manifold::run_ensemble(cfg);
    for (const auto& [name, table] : res.output.tables)
        std::cout << (res.directory / name).string() << " (" << table.size() << " rows)\n";
    std::cout << (res.directory / "manifest.json").string() << "\n";
    for (const auto& w : res.output.warnings) std::cerr << "warning: " << w << "\n";
    for (const auto& c : res.output.checks)
        std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << "\n";
    if (o.check && !manifold::all_passed(res.output.checks)) return kExitCheckFailed;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Non-Markovian invariant-manifold reduction experiments", "manifold-reduce"};
    app.set_version_flag("--version", std::string(MANIFOLD_VERSION));
    app.require_subcommand(1);

    Overrides o;
    std::vector<std::pair<std::string, std::string>> subs{
        {"mterm-stats", "M-term moments, autocorrelation and log-normal fit"},
        {"ab-compare", "AB system closures against the full system"},
        {"rbc-spectrum", "Rayleigh-Benard eigenmodes, critical point and coefficient anchors"},
        {"rbc-bifurcation", "Stationary amplitude densities across dRa"},
        {"rbc-error-scaling", "Galerkin vs reduced error scaling"},
        {"residual-scaling", "Residual suprema vs epsilon"},
        {"apriori-check", "A priori bound constant and probability"},
    };
    for (const auto& [name, help] : subs) {
        auto* sc = app.add_subcommand(name, help);
        sc->add_option("--config", o.config_file, "JSON configuration file")->check(CLI::ExistingFile);
        sc->add_option("--seed", o.seed, "Master seed");
        sc->add_option("--workers", o.workers, "Worker threads")->check(CLI::PositiveNumber);
        sc->add_option("--out", o.out, "Output directory");
        sc->add_flag("--check", o.check, "Exit with status 3 when a threshold check fails");
        sc->add_option("--samples", o.samples, "Ensemble size");
        sc->add_option("--dt", o.dt, "Time step");
        if (name.rfind("rbc-", 0) == 0) {
            sc->add_option("--L", o.L, "Aspect ratio");
            sc->add_option("--jmax", o.jmax, "Largest horizontal index");
            sc->add_option("--kmax", o.kmax, "Largest vertical index");
            sc->add_option("--dRa-grid", o.dRa_grid, "Comma-separated Ra - Ra_c values")->delimiter(',');
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitValidation;
    }
    for (const auto* sc : app.get_subcommands())
        try {
            return run(sc->get_name(), o);
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << "\n";
            return 1;
        }
    return kExitValidation;
}
