#pragma once

#include "ksobol/bandwidth.hpp"
#include "ksobol/baselines.hpp"
#include "ksobol/density.hpp"
#include "ksobol/domain.hpp"
#include "ksobol/error.hpp"
#include "ksobol/estimator.hpp"
#include "ksobol/inputs.hpp"
#include "ksobol/io.hpp"
#include "ksobol/kernel.hpp"
#include "ksobol/models.hpp"
#include "ksobol/testbed.hpp"
