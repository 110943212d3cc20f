#pragma once

#include "pfdm/error.hpp"
#include "pfdm/grid.hpp"
#include "pfdm/rng.hpp"
#include "pfdm/parallel.hpp"
#include "pfdm/stats.hpp"
#include "pfdm/pf.hpp"
#include "pfdm/io.hpp"
#include "pfdm/envs.hpp"
#include "pfdm/estimation.hpp"
#include "pfdm/refpolicy.hpp"
#include "pfdm/rl.hpp"
#include "pfdm/fpd.hpp"
#include "pfdm/klc.hpp"
#include "pfdm/formats.hpp"
#include "pfdm/config.hpp"
