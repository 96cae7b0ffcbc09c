#pragma once

#include "carbonsim/analysis.hpp"
#include "carbonsim/carbon.hpp"
#include "carbonsim/error.hpp"
#include "carbonsim/fleet.hpp"
#include "carbonsim/profiles.hpp"
#include "carbonsim/report.hpp"
#include "carbonsim/scenario.hpp"
#include "carbonsim/sched.hpp"
#include "carbonsim/sim.hpp"
