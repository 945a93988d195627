#pragma once

// Umbrella header for the estimation library. The harness headers (CLI
// configuration, campaigns, report IO) need nlohmann/json and are included
// separately from dpf/harness/.

#include "dpf/baselines/bayesian_ks.hpp"
#include "dpf/baselines/complexity.hpp"
#include "dpf/baselines/rml_spsa.hpp"
#include "dpf/diagnosis.hpp"
#include "dpf/dual.hpp"
#include "dpf/errors.hpp"
#include "dpf/gas_turbine.hpp"
#include "dpf/harness/models.hpp"
#include "dpf/model.hpp"
#include "dpf/param_filter.hpp"
#include "dpf/random.hpp"
#include "dpf/smc_core.hpp"
#include "dpf/state_filter.hpp"
