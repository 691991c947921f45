#pragma once

#include "analytic.hpp"
#include "config.hpp"
#include "experiments.hpp"
#include "hmc.hpp"
#include "model.hpp"
#include "parallel.hpp"
#include "recalibration.hpp"
#include "reporting.hpp"
#include "rng.hpp"
#include "samplers.hpp"
#include "sbc.hpp"
#include "stats.hpp"
#include "vi.hpp"
