#pragma once

#include "baselines.hpp"
#include "dfp.hpp"
#include "dynamics.hpp"
#include "error.hpp"
#include "experiment.hpp"
#include "graph.hpp"
#include "io.hpp"
#include "koopman.hpp"
#include "metrics.hpp"
#include "observables.hpp"
#include "parallel.hpp"
#include "recovery.hpp"
#include "rng.hpp"
#include "sampling.hpp"
