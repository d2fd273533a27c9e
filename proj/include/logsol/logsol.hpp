#pragma once

#include "logsol/errors.hpp"
#include "logsol/vec.hpp"
#include "logsol/ode.hpp"
#include "logsol/quadrature.hpp"
#include "logsol/groundstate.hpp"
#include "logsol/grid.hpp"
#include "logsol/nls.hpp"
#include "logsol/ansatz.hpp"
#include "logsol/reduced.hpp"
#include "logsol/modulation.hpp"
#include "logsol/io.hpp"
#include "logsol/experiments.hpp"
