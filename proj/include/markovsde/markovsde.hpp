#pragma once

// Umbrella header for the whole toolkit.

#include "markovsde/acceptance.hpp"
#include "markovsde/catalog.hpp"
#include "markovsde/config.hpp"
#include "markovsde/expr.hpp"
#include "markovsde/fpe.hpp"
#include "markovsde/grid.hpp"
#include "markovsde/io.hpp"
#include "markovsde/model.hpp"
#include "markovsde/quasipotential.hpp"
#include "markovsde/rng.hpp"
#include "markovsde/runner.hpp"
#include "markovsde/sim.hpp"
#include "markovsde/stats.hpp"
#include "markovsde/version.hpp"
