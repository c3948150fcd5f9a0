#pragma once

#include "orthodir/core.hpp"
#include "orthodir/gram.hpp"
#include "orthodir/stiefel.hpp"
#include "orthodir/directions.hpp"
#include "orthodir/solver.hpp"
#include "orthodir/problems.hpp"
#include "orthodir/diagnostics.hpp"
#include "orthodir/config.hpp"
#include "orthodir/experiment.hpp"
