#pragma once

#include "mixbias/errors.hpp"
#include "mixbias/random.hpp"
#include "mixbias/dataset.hpp"
#include "mixbias/nuisance.hpp"
#include "mixbias/functional.hpp"
#include "mixbias/finite_law.hpp"
#include "mixbias/oracle.hpp"
#include "mixbias/quadrature.hpp"
#include "mixbias/sieve.hpp"
#include "mixbias/fit.hpp"
#include "mixbias/estimand.hpp"
#include "mixbias/cross_fit.hpp"
#include "mixbias/catalog.hpp"
#include "mixbias/simulation.hpp"
#include "mixbias/config.hpp"
