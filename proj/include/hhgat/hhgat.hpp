#pragma once

#include "autodiff.hpp"
#include "engine.hpp"
#include "errors.hpp"
#include "geometry.hpp"
#include "hetgraph.hpp"
#include "io.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "run_config.hpp"
#include "sampler.hpp"
