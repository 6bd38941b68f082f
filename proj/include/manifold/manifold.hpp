#pragma once

#include "manifold/ab_system.hpp"
#include "manifold/config.hpp"
#include "manifold/ensemble.hpp"
#include "manifold/experiments.hpp"
#include "manifold/mterm.hpp"
#include "manifold/rbc_model.hpp"
#include "manifold/reduced_model.hpp"
#include "manifold/rng.hpp"
#include "manifold/sde.hpp"
#include "manifold/stats.hpp"
#include "manifold/stochastic_paths.hpp"
