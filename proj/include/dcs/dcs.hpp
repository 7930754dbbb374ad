#pragma once

// Umbrella header for the dynamic class selection library.

#include "dcs/active_set.hpp"
#include "dcs/allocation.hpp"
#include "dcs/bench.hpp"
#include "dcs/common.hpp"
#include "dcs/config.hpp"
#include "dcs/diagnostics.hpp"
#include "dcs/extractor.hpp"
#include "dcs/hash_forest.hpp"
#include "dcs/matrix.hpp"
#include "dcs/metrics.hpp"
#include "dcs/param_store.hpp"
#include "dcs/rng.hpp"
#include "dcs/runner.hpp"
#include "dcs/selectors.hpp"
#include "dcs/softmax.hpp"
#include "dcs/synthetic.hpp"
#include "dcs/trainer.hpp"
