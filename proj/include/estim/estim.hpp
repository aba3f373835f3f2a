#pragma once

#include "estim/backends.hpp"
#include "estim/bench.hpp"
#include "estim/core.hpp"
#include "estim/estimator.hpp"
#include "estim/gibbs.hpp"
#include "estim/rng.hpp"
