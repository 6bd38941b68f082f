#pragma once

#include <string>
#include <vector>

#include "manifold/config.hpp"

// Cheap settings for every experiment id, for determinism and schema tests.
inline std::vector<manifold::ExperimentConfig> small_configs(std::size_t workers) {
    std::vector<manifold::ExperimentConfig> out;
    for (const auto& id : manifold::experiment_ids()) {
        manifold::ExperimentConfig c;
        c.experiment = id;
        c.seed = 7;
        c.workers = workers;
        c.mterm.cases = {{1.0, 0.5}, {2.0, 1.0}};
        c.mterm.T = 50.0;
        c.mterm.dt = 1e-2;
        c.mterm.samples = 20;
        c.mterm.max_lag = 1.0;
        c.ab.samples = 3;
        c.ab.T = 5.0;
        c.ab.dt = 1e-2;
        c.ab.snapshot_times = {2.0};
        c.ab.snapshot_points = 5;
        c.spectrum.jmax = 3;
        c.spectrum.kmax = 3;
        c.bifurcation.dRa_grid = {0.0, 2.0, 4.0, 8.0};
        c.bifurcation.samples = 10;
        c.bifurcation.grid_points = 21;
        c.error.dRa_grid = {16.0, 32.0};
        c.error.samples = 2;
        c.error.jmax = 3;
        c.error.kmax = 2;
        c.error.T = 0.05;
        c.residual.epsilons = {0.1, 0.2, 0.4};
        c.residual.samples = 3;
        c.apriori.epsilon = 0.2;
        c.apriori.samples = 10;
        out.push_back(c);
    }
    return out;
}
