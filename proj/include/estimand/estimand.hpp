#pragma once

#include "estimand/adjustment.hpp"
#include "estimand/aggregate.hpp"
#include "estimand/bench.hpp"
#include "estimand/covariate.hpp"
#include "estimand/errors.hpp"
#include "estimand/estimands.hpp"
#include "estimand/figures.hpp"
#include "estimand/format.hpp"
#include "estimand/glm.hpp"
#include "estimand/link.hpp"
#include "estimand/maic.hpp"
#include "estimand/outcome_model.hpp"
#include "estimand/quadrature.hpp"
#include "estimand/report.hpp"
#include "estimand/rng.hpp"
#include "estimand/stc.hpp"
#include "estimand/trial.hpp"
