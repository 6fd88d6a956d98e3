#pragma once

#include "wipp/error.hpp"
#include "wipp/grid.hpp"
#include "wipp/rng.hpp"
#include "wipp/covariance.hpp"
#include "wipp/fieldgen.hpp"
#include "wipp/conditioning.hpp"
#include "wipp/multigrid.hpp"
#include "wipp/flow.hpp"
#include "wipp/transport.hpp"
#include "wipp/mlmc.hpp"
#include "wipp/model.hpp"
#include "wipp/iodata.hpp"
