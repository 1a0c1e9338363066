#pragma once

#include "gpcal/data.hpp"
#include "gpcal/errors.hpp"
#include "gpcal/gp.hpp"
#include "gpcal/kernels.hpp"
#include "gpcal/metrics.hpp"
#include "gpcal/model_io.hpp"
#include "gpcal/model_select.hpp"
#include "gpcal/normalization.hpp"
#include "gpcal/optimize.hpp"
#include "gpcal/parallel.hpp"
#include "gpcal/pipeline.hpp"
