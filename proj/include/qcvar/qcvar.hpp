#pragma once

#include "qcvar/config.hpp"
#include "qcvar/cvar_oracle.hpp"
#include "qcvar/errors.hpp"
#include "qcvar/experiments.hpp"
#include "qcvar/gaussian_reference.hpp"
#include "qcvar/gradient_estimate.hpp"
#include "qcvar/mc_estimator.hpp"
#include "qcvar/optimizer.hpp"
#include "qcvar/parallel.hpp"
#include "qcvar/qae_engine.hpp"
#include "qcvar/random.hpp"
#include "qcvar/resources.hpp"
#include "qcvar/risk_core.hpp"
#include "qcvar/scenario_model.hpp"
#include "qcvar/svg.hpp"
