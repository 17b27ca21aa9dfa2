#pragma once

#include "simf/assembler.hpp"
#include "simf/baseline.hpp"
#include "simf/channel.hpp"
#include "simf/config.hpp"
#include "simf/core.hpp"
#include "simf/cosim.hpp"
#include "simf/overhead.hpp"
#include "simf/reference.hpp"
#include "simf/routines.hpp"
#include "simf/scheduler.hpp"
