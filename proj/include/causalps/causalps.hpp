#pragma once

// Umbrella header for the Bayesian propensity score weighting library.

#include "causalps/bart.hpp"
#include "causalps/baselines.hpp"
#include "causalps/cli.hpp"
#include "causalps/csv.hpp"
#include "causalps/dataset.hpp"
#include "causalps/diagnostics.hpp"
#include "causalps/hmc.hpp"
#include "causalps/outcome.hpp"
#include "causalps/parallel.hpp"
#include "causalps/rng.hpp"
#include "causalps/simulation.hpp"
#include "causalps/stats.hpp"
#include "causalps/treatment_models.hpp"
