#pragma once

#include "mcir/grid.hpp"
#include "mcir/linops.hpp"
#include "mcir/projector.hpp"
#include "mcir/motion.hpp"
#include "mcir/functionals.hpp"
#include "mcir/record.hpp"
#include "mcir/solvers.hpp"
#include "mcir/theory.hpp"
#include "mcir/simulate.hpp"
#include "mcir/pipeline.hpp"
#include "mcir/experiment_io.hpp"
