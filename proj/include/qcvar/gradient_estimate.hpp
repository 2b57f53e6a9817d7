#pragma once

#include <cstdint>

#include "qcvar/scenario_model.hpp"

namespace qcvar {

/// Output of a CVaR subgradient estimator.
struct GradientEstimate {
  Vector g_hat;
  double p_hat = 0.0;                  // tail probability estimate
  double z_tilde = 0.0;                // VaR estimate (loss units)
  std::uint64_t queries = 0;           // total oracle queries / scenario draws
  std::uint64_t per_coord_budget = 0;  // queries per payload estimate
};

}  // namespace qcvar
