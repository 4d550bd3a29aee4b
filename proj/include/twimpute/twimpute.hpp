#pragma once

#include "twimpute/baselines.hpp"
#include "twimpute/constraints.hpp"
#include "twimpute/core_types.hpp"
#include "twimpute/csv.hpp"
#include "twimpute/dgp.hpp"
#include "twimpute/embed.hpp"
#include "twimpute/metrics.hpp"
#include "twimpute/objective.hpp"
#include "twimpute/ot.hpp"
#include "twimpute/solver.hpp"
#include "twimpute/theory.hpp"
