// SPDX-License-Identifier: Apache-2.0
//
// robustpl: outage-constrained robust power loading for the MU-MISO downlink
// ------------------------------------------------------------------------

#ifndef ROBUSTPL_ROBUSTPL_HPP
#define ROBUSTPL_ROBUSTPL_HPP

#include "types.hpp"
#include "linalg.hpp"
#include "model.hpp"
#include "quadrature.hpp"
#include "gaussian_quadratic.hpp"
#include "power_loading.hpp"
#include "zf_fast.hpp"
#include "bench.hpp"

#endif
