#pragma once

// End-to-end CVaR subgradient oracle:
//   1. VaR threshold by bisection on amplitude estimates of Pr[L < z]
//   2. tail probability p_hat from the tail-flag circuit
//   3. per-coordinate payload amplitudes A_j, de-rescaled to mu_j
//   4. g_hat_j = -mu_j / p_hat

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "qcvar/errors.hpp"
#include "qcvar/gradient_estimate.hpp"
#include "qcvar/qae_engine.hpp"
#include "qcvar/random.hpp"
#include "qcvar/risk_core.hpp"
#include "qcvar/scenario_model.hpp"

namespace qcvar {

struct OracleConfig {
  double alpha = 0.95;
  double eps = 0.05;  // target l2 accuracy
  double eta = 0.05;  // overall failure probability
  std::optional<double> delta;  // VaR accuracy; default eps (U - L) / 10
  std::optional<double> bracket_lo;
  std::optional<double> bracket_hi;
  std::optional<double> eps_cdf;  // default: eps_p of the error budget
  std::optional<double> p_floor;  // default (1 - alpha) / 4
  std::optional<double> threshold;  // fixed z; skips bisection
  std::optional<unsigned> repetitions;  // median-of-means count override
  double repetition_constant = 8.0;
  double fixed_budget_delta_rel = 1e-6;  // delta / (U - L) when qae.budget is set
  QaeConfig qae;

  double floor() const { return p_floor.value_or((1.0 - alpha) / 4.0); }

  void validate() const {
    detail::require(alpha > 0.0 && alpha < 1.0, "oracle: alpha must lie in (0, 1)");
    detail::require(eps > 0.0 && eps < 1.0, "oracle: eps must lie in (0, 1)");
    detail::require(eta > 0.0 && eta < 1.0, "oracle: eta must lie in (0, 1)");
    if (delta) detail::require(*delta > 0.0 && *delta < 1.0, "oracle: delta must lie in (0, 1)");
    if (bracket_lo && bracket_hi) detail::require(*bracket_lo < *bracket_hi, "oracle: bracket must satisfy L < U");
    if (eps_cdf) detail::require(*eps_cdf > 0.0 && *eps_cdf < 1.0, "oracle: eps_cdf must lie in (0, 1)");
    detail::require(floor() > 0.0 && floor() <= 1.0 - alpha, "oracle: p_floor must lie in (0, 1 - alpha]");
    if (repetitions) detail::require(*repetitions >= 1 && *repetitions % 2 == 1, "oracle: repetitions must be odd");
    detail::require(repetition_constant > 0.0, "oracle: repetition constant must be positive");
    detail::require(fixed_budget_delta_rel > 0.0 && fixed_budget_delta_rel < 1.0,
                    "oracle: fixed_budget_delta_rel must lie in (0, 1)");
    qae.validate();
  }
};

struct ErrorBudget {
  double eps_amplitude = 0.0;    // per-coordinate payload accuracy
  double eps_probability = 0.0;  // tail probability accuracy
  std::uint64_t budget_amplitude = 0;
  std::uint64_t budget_probability = 0;
  unsigned repetitions = 1;
  std::size_t dim = 0;

  std::uint64_t total_queries() const {
    return static_cast<std::uint64_t>(repetitions) * (budget_probability + dim * budget_amplitude);
  }
};

/// Splits the l2 target between the payload term and the tail-probability
/// term of the ratio perturbation bound, each <= eps / 2.
inline ErrorBudget error_budget(std::size_t d, double eps, double eta, double p_lower, const Vector& lower,
                                const Vector& upper, double emulator_constant = 1.0,
                                double repetition_constant = 8.0) {
  detail::require(d >= 1, "error_budget: d must be >= 1");
  detail::require(eps > 0.0 && eps < 1.0 && eta > 0.0 && eta < 1.0, "error_budget: eps, eta must lie in (0, 1)");
  detail::require(p_lower > 0.0, "error_budget: p_lower must be positive");
  detail::require(static_cast<std::size_t>(lower.size()) == d && static_cast<std::size_t>(upper.size()) == d,
                  "error_budget: bounds size mismatch");
  constexpr double amplitude_share = 0.5;
  const double max_range = (upper - lower).cwiseAbs().maxCoeff();
  const double lower_norm = lower.norm();
  const double bound_norm = lower.cwiseAbs().cwiseMax(upper.cwiseAbs()).norm();

  ErrorBudget b;
  b.dim = d;
  b.eps_amplitude = amplitude_share * eps * p_lower / (std::sqrt(static_cast<double>(d)) * max_range);
  b.eps_probability = 0.5 * eps * p_lower / (lower_norm + bound_norm);
  b.budget_amplitude = static_cast<std::uint64_t>(std::ceil(emulator_constant / b.eps_amplitude));
  b.budget_probability = static_cast<std::uint64_t>(std::ceil(emulator_constant / b.eps_probability));
  auto reps = static_cast<unsigned>(std::ceil(repetition_constant * std::log((static_cast<double>(d) + 1.0) / eta)));
  b.repetitions = std::max(1u, reps | 1u);
  return b;
}

/// Non-owning view of either a finite scenario set or a sampling model.
class ScenarioSource {
 public:
  ScenarioSource(const ScenarioSet& set) : set_(&set) {}  // NOLINT(google-explicit-constructor)
  ScenarioSource(const ReturnModel& model) : model_(&model) {}  // NOLINT(google-explicit-constructor)

  const ScenarioSet* set() const { return set_; }
  const ReturnModel* model() const { return model_; }
  std::size_t dim() const { return set_ ? set_->dim() : model_->dim(); }
  const Vector& lower() const { return set_ ? set_->lower : model_->lower; }
  const Vector& upper() const { return set_ ? set_->upper : model_->upper; }

 private:
  const ScenarioSet* set_ = nullptr;
  const ReturnModel* model_ = nullptr;
};

/// Which marked amplitude a circuit prepares.
struct Circuit {
  TailMarking marking;
  std::optional<std::size_t> payload;  // empty: tail-probability circuit
};

/// Shared samples are capped at this many return entries (M^2 d).
inline constexpr std::size_t kMaxSharedEntries = 60'000'000;

/// Produces amplitude estimates for one oracle call and tallies queries.
/// Not thread-safe; give each concurrent oracle call its own engine.
class AmplitudeEngine {
 public:
  AmplitudeEngine(const ScenarioSource& src, const Vector& w, QaeConfig cfg, unsigned repetitions,
                  std::uint64_t sample_budget, std::uint64_t seed)
      : cfg_(std::move(cfg)), repetitions_(repetitions), seed_(seed) {
    cfg_.validate();
    detail::require(repetitions_ >= 1 && repetitions_ % 2 == 1, "engine: repetitions must be odd");
    detail::require(static_cast<std::size_t>(w.size()) == src.dim(), "engine: weight dimension mismatch");
    if (shared()) {
      detail::require(sample_budget >= 1, "engine: shared emulation needs a budget");
      const std::uint64_t n = sample_budget * sample_budget;
      if (n > kMaxSharedEntries / src.dim())
        throw ResourceLimit("engine: shared emulation with M=" + std::to_string(sample_budget) +
                            " exceeds the sample cap");
      for (unsigned r = 0; r < repetitions_; ++r) samples_.push_back(draw(src, w, n, derive_seed(seed_, r)));
    } else {
      if (src.set() == nullptr)
        throw InvalidParameter("engine: this backend needs a scenario set (exact amplitudes)");
      base_.emplace(*src.set(), w);
    }
  }

  bool exact() const { return cfg_.backend == QaeBackend::exact; }
  bool shared() const { return cfg_.backend == QaeBackend::ideal && cfg_.emulation == IdealEmulation::shared; }
  std::uint64_t queries() const { return queries_; }
  unsigned repetitions() const { return repetitions_; }

  /// Ground-truth amplitude (exact backends only).
  double true_amplitude(const Circuit& c) const {
    detail::require(base_.has_value(), "engine: no exact scenario set");
    return amplitude(*base_, c);
  }

  /// Median over the repetitions of one estimate each at `budget` queries.
  double estimate(const Circuit& c, std::uint64_t budget) {
    detail::require(budget >= 1, "engine: budget must be >= 1");
    std::vector<double> reps;
    reps.reserve(repetitions_);
    if (shared()) {
      for (const auto& s : samples_) reps.push_back(amplitude(s, c));
      queries_ += budget * repetitions_;
    } else {
      const double a = amplitude(*base_, c);
      for (unsigned r = 0; r < repetitions_; ++r) {
        AmplitudeOracle oracle(a);
        reps.push_back(estimate_amplitude(oracle, cfg_, budget, derive_seed(seed_, 0x10000 + calls_++)));
        queries_ += oracle.queries();
      }
    }
    return amplify_confidence(std::move(reps));
  }

 private:
  static double amplitude(const MarkedScenarios& s, const Circuit& c) {
    return c.payload ? s.payload_amplitude(c.marking, *c.payload) : s.tail_amplitude(c.marking);
  }

  static MarkedScenarios draw(const ScenarioSource& src, const Vector& w, std::uint64_t n, std::uint64_t seed) {
    const auto rows = static_cast<std::size_t>(n);
    std::vector<double> probs(rows, 1.0 / static_cast<double>(rows));
    if (src.model() != nullptr) {
      auto r = std::make_shared<const Matrix>(sample_returns(*src.model(), rows, seed));
      return {std::move(r), std::move(probs), src.lower(), src.upper(), w};
    }
    const ScenarioSet& set = *src.set();
    Rng rng = make_rng(seed, 0x5EED);
    std::discrete_distribution<std::size_t> pick(set.probs.begin(), set.probs.end());
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(set.dim()));
    for (std::size_t i = 0; i < rows; ++i) m.row(static_cast<Eigen::Index>(i)) = set.returns->row(
        static_cast<Eigen::Index>(pick(rng)));
    return {std::make_shared<const Matrix>(std::move(m)), std::move(probs), set.lower, set.upper, w};
  }

  QaeConfig cfg_;
  unsigned repetitions_;
  std::uint64_t seed_;
  std::uint64_t calls_ = 0;
  std::uint64_t queries_ = 0;
  std::optional<MarkedScenarios> base_;
  std::vector<MarkedScenarios> samples_;
};

/// p_hat = 2 * (tail amplitude estimate), clamped to [0, 1].
inline double estimate_tail_probability(AmplitudeEngine& engine, const TailMarking& m, std::uint64_t budget) {
  return std::clamp(2.0 * engine.estimate(Circuit{m, std::nullopt}, budget), 0.0, 1.0);
}

inline double estimate_tail_payload(AmplitudeEngine& engine, const TailMarking& m, std::size_t j,
                                    std::uint64_t budget) {
  return engine.estimate(Circuit{m, j}, budget);
}

/// mu_j = m_j p + (M_j - m_j) A_j.
inline double derescale_mu(double a_hat, double p_hat, double lower, double upper) {
  detail::require(lower < upper, "derescale_mu: lower bound must be below upper bound");
  return lower * p_hat + (upper - lower) * a_hat;
}

/// g_j = -mu_j / p_hat.
inline Vector gradient_from_estimates(const Vector& mu_hat, double p_hat, double p_floor) {
  if (!(p_hat >= p_floor))
    throw DegenerateTail("tail probability estimate " + std::to_string(p_hat) + " below floor " +
                         std::to_string(p_floor) + " (threshold overshoot or budget too small)");
  return -mu_hat / p_hat;
}

struct VarEstimate {
  double z = 0.0;
  unsigned steps = 0;
  std::uint64_t queries = 0;
};

inline unsigned bisection_steps(double lo, double hi, double delta) {
  const double ratio = (hi - lo) / delta;
  if (ratio <= 1.0) return 0;
  return static_cast<unsigned>(std::ceil(std::log2(ratio) - 1e-9));
}

/// Bisection on the estimated CDF F(z) = Pr[L < z] = 1 - p_hat(z).
/// Keeps F(lo) < alpha <= F(hi) and returns the final lower end, so the
/// tail {L >= z} contains the VaR atom and |z - VaR| < delta when the
/// comparisons are noiseless. Noisy comparisons simply continue.
inline VarEstimate estimate_var_bisection(AmplitudeEngine& engine, double alpha, double lo, double hi, double delta,
                                          std::uint64_t budget) {
  detail::require(alpha > 0.0 && alpha < 1.0, "bisection: alpha must lie in (0, 1)");
  detail::require(lo < hi, "bisection: bracket must satisfy L < U");
  detail::require(delta > 0.0, "bisection: delta must be positive");
  const std::uint64_t q0 = engine.queries();
  const auto cdf = [&](double z) { return 1.0 - estimate_tail_probability(engine, TailMarking{z}, budget); };
  if (!(cdf(lo) < alpha) || !(cdf(hi) >= alpha))
    throw BracketError("bisection: bracket [" + std::to_string(lo) + ", " + std::to_string(hi) +
                       "] does not straddle the alpha-quantile");
  VarEstimate out;
  out.steps = bisection_steps(lo, hi, delta);
  for (unsigned s = 0; s < out.steps; ++s) {
    const double mid = 0.5 * (lo + hi);
    if (cdf(mid) >= alpha)
      hi = mid;
    else
      lo = mid;
  }
  out.z = lo;
  out.queries = engine.queries() - q0;
  return out;
}

/// Loss range of the bounds box for portfolio w.
inline std::pair<double, double> loss_range(const Vector& w, const Vector& lower, const Vector& upper) {
  double lo = 0.0;
  double hi = 0.0;
  for (Eigen::Index j = 0; j < w.size(); ++j) {
    const double a = -w[j] * lower[j];
    const double b = -w[j] * upper[j];
    lo += std::min(a, b);
    hi += std::max(a, b);
  }
  return {lo, hi};
}

namespace detail {

struct ResolvedBudgets {
  std::uint64_t amplitude = 0;
  std::uint64_t probability = 0;
  std::uint64_t cdf = 0;
  unsigned repetitions = 1;
  double delta = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

inline ResolvedBudgets resolve_budgets(const ScenarioSource& src, const Vector& w, const OracleConfig& cfg) {
  ResolvedBudgets r;
  const auto [box_lo, box_hi] = loss_range(w, src.lower(), src.upper());
  r.lo = cfg.bracket_lo.value_or(box_lo);
  r.hi = cfg.bracket_hi.value_or(box_hi);
  require(r.lo < r.hi, "oracle: bracket must satisfy L < U");
  if (cfg.qae.budget > 0) {
    r.amplitude = r.probability = r.cdf = cfg.qae.budget;
    r.repetitions = cfg.repetitions.value_or(1);
    r.delta = cfg.delta.value_or(cfg.fixed_budget_delta_rel * (r.hi - r.lo));
  } else {
    const ErrorBudget eb = error_budget(src.dim(), cfg.eps, cfg.eta, 1.0 - cfg.alpha, src.lower(), src.upper(),
                                        cfg.qae.emulator_constant, cfg.repetition_constant);
    r.amplitude = eb.budget_amplitude;
    r.probability = eb.budget_probability;
    r.cdf = static_cast<std::uint64_t>(std::ceil(cfg.qae.emulator_constant / cfg.eps_cdf.value_or(eb.eps_probability)));
    r.repetitions = cfg.repetitions.value_or(eb.repetitions);
    r.delta = cfg.delta.value_or(cfg.eps * (r.hi - r.lo) / 10.0);
  }
  return r;
}

inline void check_simplex(const Vector& w) {
  require(w.size() >= 1 && w.allFinite(), "oracle: invalid weights");
  require(w.minCoeff() >= -1e-12 && std::abs(w.sum() - 1.0) <= 1e-9, "oracle: weights must lie on the simplex");
}

}  // namespace detail

inline AmplitudeEngine make_engine(const ScenarioSource& src, const Vector& w, const OracleConfig& cfg,
                                   std::uint64_t seed) {
  const auto b = detail::resolve_budgets(src, w, cfg);
  return {src, w, cfg.qae, b.repetitions, b.amplitude, seed};
}

inline VarEstimate estimate_var_bisection(const ScenarioSource& src, const Vector& w, const OracleConfig& cfg,
                                          std::uint64_t seed) {
  cfg.validate();
  const auto b = detail::resolve_budgets(src, w, cfg);
  AmplitudeEngine engine(src, w, cfg.qae, b.repetitions, b.amplitude, seed);
  return estimate_var_bisection(engine, cfg.alpha, b.lo, b.hi, b.delta, b.cdf);
}

/// O_CVaR(w, alpha, eps, eta). With the exact backend the boundary atom at
/// z is split (tie weight on the comparator) so that the output equals the
/// exact subgradient whenever z is the exact VaR.
inline GradientEstimate cvar_gradient_oracle(const ScenarioSource& src, const Vector& w, const OracleConfig& cfg,
                                             std::uint64_t seed) {
  cfg.validate();
  detail::require(static_cast<std::size_t>(w.size()) == src.dim(), "oracle: weight dimension mismatch");
  detail::check_simplex(w);
  const auto b = detail::resolve_budgets(src, w, cfg);
  AmplitudeEngine engine(src, w, cfg.qae, b.repetitions, b.amplitude, seed);

  TailMarking marking{cfg.threshold ? *cfg.threshold
                                    : estimate_var_bisection(engine, cfg.alpha, b.lo, b.hi, b.delta, b.cdf).z};

  if (engine.exact()) {
    const double at_or_above = 2.0 * engine.true_amplitude(Circuit{TailMarking{marking.z, 1.0}, std::nullopt});
    const double strictly_above = 2.0 * engine.true_amplitude(Circuit{TailMarking{marking.z, 0.0}, std::nullopt});
    const double target = 1.0 - cfg.alpha;
    const double at = at_or_above - strictly_above;
    constexpr double slack = detail::kCumulativeSlack;  // summation rounding in the amplitudes
    if (at > 0.0 && strictly_above <= target + slack && target <= at_or_above + slack)
      marking.tie_weight = std::clamp((target - strictly_above) / at, 0.0, 1.0);
  }

  const double p_hat = estimate_tail_probability(engine, marking, b.probability);
  const double floor = cfg.floor();
  if (!(p_hat >= floor))
    throw DegenerateTail("oracle: tail probability estimate " + std::to_string(p_hat) + " below floor " +
                         std::to_string(floor));

  const std::size_t d = src.dim();
  Vector mu(static_cast<Eigen::Index>(d));
  for (std::size_t j = 0; j < d; ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    const double a_hat = std::clamp(estimate_tail_payload(engine, marking, j, b.amplitude), 0.0, p_hat);
    mu[jj] = derescale_mu(a_hat, p_hat, src.lower()[jj], src.upper()[jj]);
  }

  GradientEstimate est;
  est.g_hat = gradient_from_estimates(mu, p_hat, floor);
  est.p_hat = p_hat;
  est.z_tilde = marking.z;
  est.queries = engine.queries();
  est.per_coord_budget = b.amplitude;
  return est;
}

}  // namespace qcvar
