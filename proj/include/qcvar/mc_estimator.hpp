#pragma once

// Classical Monte Carlo baseline. A sample of N returns becomes an equally
// weighted loss distribution, and the exact routines of risk_core run on it,
// so quantile and boundary conventions match the ground truth exactly.

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>

#include "qcvar/errors.hpp"
#include "qcvar/gradient_estimate.hpp"
#include "qcvar/risk_core.hpp"
#include "qcvar/scenario_model.hpp"

namespace qcvar {

/// ceil(5 / (1 - alpha)): about five expected tail points.
inline std::size_t min_mc_samples(double alpha) {
  detail::check_alpha(alpha);
  return static_cast<std::size_t>(std::ceil(5.0 / (1.0 - alpha) - 1e-9));
}

inline EmpiricalLossDistribution mc_loss_distribution(const ReturnModel& model, const Vector& w, double alpha,
                                                      std::size_t n, std::uint64_t seed) {
  detail::check_alpha(alpha);
  detail::require(static_cast<std::size_t>(w.size()) == model.dim(), "mc: weight dimension mismatch");
  const std::size_t floor = min_mc_samples(alpha);
  if (n < floor)
    throw InsufficientSamples("mc: N=" + std::to_string(n) + " below minimum " + std::to_string(floor) +
                              " for alpha");
  auto samples = std::make_shared<const Matrix>(sample_returns(model, n, seed));
  return make_uniform_loss_distribution(std::move(samples), w);
}

inline double estimate_var_mc(const ReturnModel& model, const Vector& w, double alpha, std::size_t n,
                              std::uint64_t seed) {
  return var_exact(mc_loss_distribution(model, w, alpha, n, seed), alpha);
}

inline double estimate_cvar_mc(const ReturnModel& model, const Vector& w, double alpha, std::size_t n,
                               std::uint64_t seed) {
  return cvar_exact(mc_loss_distribution(model, w, alpha, n, seed), alpha);
}

inline GradientEstimate gradient_from_distribution(const EmpiricalLossDistribution& dist, double alpha,
                                                   std::uint64_t queries) {
  const TailSplit t = tail_split(dist, alpha);
  GradientEstimate est;
  est.g_hat = subgradient_exact(dist, alpha);
  est.p_hat = t.mass;
  est.z_tilde = t.var;
  est.queries = queries;
  est.per_coord_budget = queries;
  return est;
}

/// Tail average of -r over N simulated returns; queries = N.
inline GradientEstimate estimate_gradient_mc(const ReturnModel& model, const Vector& w, double alpha,
                                             std::size_t n, std::uint64_t seed) {
  return gradient_from_distribution(mc_loss_distribution(model, w, alpha, n, seed), alpha, n);
}

/// Probability-weighted version over a full scenario set (no sampling).
inline GradientEstimate estimate_gradient_mc(const ScenarioSet& scen, const Vector& w, double alpha) {
  return gradient_from_distribution(make_loss_distribution(scen, w), alpha, scen.size());
}

}  // namespace qcvar
