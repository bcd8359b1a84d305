#pragma once

#include "zng/cache.hpp"
#include "zng/config.hpp"
#include "zng/engine.hpp"
#include "zng/ftl.hpp"
#include "zng/gc.hpp"
#include "zng/geometry.hpp"
#include "zng/interconnect.hpp"
#include "zng/metrics.hpp"
#include "zng/timing.hpp"
#include "zng/trace.hpp"
#include "zng/types.hpp"
#include "zng/znand.hpp"
