#pragma once

#include <sdacc/common.hpp>
#include <sdacc/nonlinear.hpp>
#include <sdacc/phase.hpp>
#include <sdacc/scheduler.hpp>
#include <sdacc/simcore.hpp>
#include <sdacc/uniconv.hpp>
#include <sdacc/unet_recipe.hpp>
#include <sdacc/workload.hpp>
