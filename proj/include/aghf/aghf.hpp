#pragma once

// Everything: model, schedule, constraints, metric, solver, extraction, I/O
// and scenarios.

#include "aghf/constraints.hpp"
#include "aghf/errors.hpp"
#include "aghf/extraction.hpp"
#include "aghf/io.hpp"
#include "aghf/metric.hpp"
#include "aghf/model.hpp"
#include "aghf/scenario.hpp"
#include "aghf/schedule.hpp"
#include "aghf/solver.hpp"
