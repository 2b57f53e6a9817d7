#pragma once

// Projected stochastic subgradient descent over the probability simplex,
//   w_{t+1} = P_simplex(w_t - eta_t g_t),  eta_t = step_c / (G sqrt(t)),
// with a pluggable gradient oracle and per-iteration query accounting.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "qcvar/cvar_oracle.hpp"
#include "qcvar/errors.hpp"
#include "qcvar/gradient_estimate.hpp"
#include "qcvar/mc_estimator.hpp"
#include "qcvar/random.hpp"
#include "qcvar/risk_core.hpp"
#include "qcvar/scenario_model.hpp"

namespace qcvar {

/// Euclidean projection onto {w >= 0, sum w = 1} (sort and threshold).
inline Vector project_simplex(const Vector& v) {
  detail::require(v.size() >= 1 && v.allFinite(), "project_simplex: vector must be finite and nonempty");
  std::vector<double> u(v.data(), v.data() + v.size());
  std::sort(u.begin(), u.end(), std::greater<>());
  double cum = 0.0;
  double theta = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cum += u[j];
    const double t = (cum - 1.0) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) theta = t;
  }
  Vector w = (v.array() - theta).cwiseMax(0.0);
  return w / w.sum();
}

enum class GradientMethod { mc, qae };

inline std::string to_string(GradientMethod m) { return m == GradientMethod::mc ? "MC" : "QAE-style"; }

struct SgdConfig {
  std::size_t iterations = 40;
  double step_c = 0.1;
  std::uint64_t per_iter_budget = 200;
  GradientMethod estimator = GradientMethod::mc;
  Vector w0;  // empty: equal weights
  std::uint64_t seed = 0;
  std::optional<double> grad_scale;  // G in eta_t; default measured on the evaluation set

  void validate(std::size_t d) const {
    detail::require(iterations >= 1, "sgd: T must be >= 1");
    detail::require(step_c > 0.0, "sgd: step_c must be positive");
    detail::require(per_iter_budget >= 1, "sgd: per-iteration budget must be >= 1");
    if (grad_scale) detail::require(*grad_scale > 0.0, "sgd: gradient scale must be positive");
    if (w0.size() > 0) {
      detail::require(static_cast<std::size_t>(w0.size()) == d, "sgd: w0 dimension mismatch");
      detail::require(w0.minCoeff() >= -1e-12 && std::abs(w0.sum() - 1.0) <= 1e-10, "sgd: w0 must lie on the simplex");
    }
  }

  Vector start(std::size_t d) const {
    return w0.size() > 0 ? w0 : Vector::Constant(static_cast<Eigen::Index>(d), 1.0 / static_cast<double>(d));
  }
};

struct TrajectoryRecord {
  std::size_t iter = 0;
  Vector w;                         // iterate after step `iter`
  double cvar = 0.0;                // independent evaluation of w
  double cvar_in_loop = 0.0;        // <w_{iter-1}, g_hat>, the oracle's own CVaR estimate
  std::uint64_t cum_queries = 0;    // nominal budget, per_iter_budget * iter
  std::uint64_t oracle_queries = 0; // cumulative circuit-level queries reported by the oracle
};

using GradientOracle = std::function<GradientEstimate(const Vector& w, std::size_t iter)>;
using CvarEvaluator = std::function<double(const Vector& w)>;

/// Core loop. For a linear loss CVaR(w) = <w, E[-r | tail]>, so the
/// in-loop CVaR estimate is <w, g_hat>.
inline std::vector<TrajectoryRecord> run_projected_sgd(const GradientOracle& oracle, const CvarEvaluator& evaluate,
                                                       const SgdConfig& cfg, std::size_t d) {
  cfg.validate(d);
  const double scale = cfg.grad_scale.value_or(1.0);
  Vector w = cfg.start(d);
  std::vector<TrajectoryRecord> out;
  out.reserve(cfg.iterations);
  std::uint64_t cum = 0;
  std::uint64_t oracle_cum = 0;
  for (std::size_t t = 1; t <= cfg.iterations; ++t) {
    const GradientEstimate g = oracle(w, t);
    detail::require(static_cast<std::size_t>(g.g_hat.size()) == d, "sgd: oracle returned wrong dimension");
    const double in_loop = w.dot(g.g_hat);
    const double eta = cfg.step_c / (scale * std::sqrt(static_cast<double>(t)));
    w = project_simplex(w - eta * g.g_hat);
    cum += cfg.per_iter_budget;
    oracle_cum += g.queries;
    out.push_back(TrajectoryRecord{t, w, evaluate(w), in_loop, cum, oracle_cum});
  }
  return out;
}

/// Fixed evaluation sample (independent of optimization queries).
inline ScenarioSet make_evaluation_set(const ReturnModel& model, std::size_t n = 10'000, std::uint64_t seed = 20'251'016) {
  return scenarios_from_samples(model, n, seed);
}

inline double evaluate_cvar(const ScenarioSet& eval, const Vector& w, double alpha) {
  return cvar_exact(make_loss_distribution(eval, w), alpha);
}

/// max ||r|| over the evaluation set: the a.s. bound on ||grad_w L||.
inline double gradient_scale(const ScenarioSet& eval) { return eval.returns->rowwise().norm().maxCoeff(); }

/// Model-driven run with the configured estimator (MC samples or the
/// QAE-style oracle at `per_iter_budget` queries per amplitude estimate).
inline std::vector<TrajectoryRecord> run_projected_sgd(const ReturnModel& model, const SgdConfig& cfg,
                                                       const OracleConfig& oracle_cfg, const ScenarioSet& eval) {
  const std::size_t d = model.dim();
  OracleConfig qcfg = oracle_cfg;
  qcfg.qae.budget = cfg.per_iter_budget;
  GradientOracle oracle = [&](const Vector& w, std::size_t t) -> GradientEstimate {
    const std::uint64_t seed = derive_seed(cfg.seed, t);
    if (cfg.estimator == GradientMethod::mc)
      return estimate_gradient_mc(model, w, oracle_cfg.alpha, cfg.per_iter_budget, seed);
    return cvar_gradient_oracle(model, w, qcfg, seed);
  };
  SgdConfig run = cfg;
  if (!run.grad_scale) run.grad_scale = gradient_scale(eval);
  const double alpha = oracle_cfg.alpha;
  try {
    return run_projected_sgd(oracle, [&](const Vector& w) { return evaluate_cvar(eval, w, alpha); }, run, d);
  } catch (const DegenerateTail& e) {
    throw DegenerateTail(std::string("sgd (") + to_string(cfg.estimator) + "): " + e.what());
  }
}

/// min_t CVaR(w_t) - f_star on the evaluation set.
inline double best_iterate_gap(const std::vector<TrajectoryRecord>& trajectory, double f_star, const ScenarioSet& eval,
                               double alpha) {
  detail::require(!trajectory.empty(), "best_iterate_gap: empty trajectory");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& rec : trajectory) best = std::min(best, evaluate_cvar(eval, rec.w, alpha));
  return best - f_star;
}

struct SimplexMinimum {
  Vector w;
  double value = std::numeric_limits<double>::infinity();
};

namespace detail {

template <class Visit>
void for_each_composition(std::size_t d, std::size_t total, std::vector<std::size_t>& parts, std::size_t at,
                          std::size_t remaining, Visit&& visit) {
  if (at + 1 == d) {
    parts[at] = remaining;
    visit(parts);
    return;
  }
  for (std::size_t k = 0; k <= remaining; ++k) {
    parts[at] = k;
    for_each_composition(d, total, parts, at + 1, remaining - k, visit);
  }
}

}  // namespace detail

/// Dense simplex grid at spacing 1/resolution, then `refinements` rounds of
/// a local grid 20x finer around the incumbent. Intended for d <= 4.
inline SimplexMinimum grid_search_min_cvar(const ScenarioSet& scen, double alpha, std::size_t resolution = 100,
                                           int refinements = 2) {
  const std::size_t d = scen.dim();
  detail::require(d >= 1 && d <= 4, "grid search: supported for 1 <= d <= 4");
  detail::require(resolution >= 1, "grid search: resolution must be >= 1");
  SimplexMinimum best;
  auto consider = [&](const Vector& w) {
    const double v = evaluate_cvar(scen, w, alpha);
    if (v < best.value) {
      best.value = v;
      best.w = w;
    }
  };
  std::vector<std::size_t> parts(d, 0);
  detail::for_each_composition(d, resolution, parts, 0, resolution, [&](const std::vector<std::size_t>& p) {
    Vector w(static_cast<Eigen::Index>(d));
    for (std::size_t j = 0; j < d; ++j) w[static_cast<Eigen::Index>(j)] = static_cast<double>(p[j]) / resolution;
    consider(w);
  });

  double step = 1.0 / static_cast<double>(resolution);
  for (int r = 0; r < refinements && d > 1; ++r) {
    const double fine = step / 20.0;
    constexpr int span = 40;  // +- 2 coarse steps
    const Vector center = best.w;
    std::vector<int> offs(d - 1, -span);
    while (true) {
      Vector w(static_cast<Eigen::Index>(d));
      double head = 0.0;
      for (std::size_t j = 0; j + 1 < d; ++j) {
        w[static_cast<Eigen::Index>(j)] = center[static_cast<Eigen::Index>(j)] + offs[j] * fine;
        head += w[static_cast<Eigen::Index>(j)];
      }
      w[static_cast<Eigen::Index>(d - 1)] = 1.0 - head;
      if (w.minCoeff() >= 0.0) consider(w);
      std::size_t k = 0;
      while (k < offs.size() && ++offs[k] > span) offs[k++] = -span;
      if (k == offs.size()) break;
    }
    step = fine;
  }
  return best;
}

}  // namespace qcvar
