#pragma once

#include "toscca/common.hpp"
#include "toscca/csv.hpp"
#include "toscca/cross_validation.hpp"
#include "toscca/cca.hpp"
#include "toscca/lme.hpp"
#include "toscca/long_view.hpp"
#include "toscca/simulate.hpp"
#include "toscca/threshold.hpp"
#include "toscca/time_basis.hpp"
#include "toscca/toscca_mm.hpp"
