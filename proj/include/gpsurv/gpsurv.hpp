#pragma once

#include "gpsurv/core.hpp"
#include "gpsurv/kernels.hpp"
#include "gpsurv/gp_paths.hpp"
#include "gpsurv/hazard_model.hpp"
#include "gpsurv/vc_metrics.hpp"
#include "gpsurv/kl_diagnostics.hpp"
#include "gpsurv/prob_bounds.hpp"
#include "gpsurv/inference.hpp"
#include "gpsurv/io.hpp"
#include "gpsurv/config.hpp"
#include "gpsurv/cli.hpp"
