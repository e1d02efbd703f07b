#pragma once

#include "opbridge/analysis.hpp"
#include "opbridge/bridgecore.hpp"
#include "opbridge/errors.hpp"
#include "opbridge/grids.hpp"
#include "opbridge/io.hpp"
#include "opbridge/matfun.hpp"
#include "opbridge/quadrature.hpp"
#include "opbridge/rng.hpp"
#include "opbridge/sampler.hpp"
#include "opbridge/spectral.hpp"
#include "opbridge/uniqueness.hpp"
