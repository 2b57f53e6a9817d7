#pragma once

// Amplitude layer. The state-preparation, loss, comparator and payload
// registers only serve to define two kinds of marked amplitudes,
//
//   tail:     Pr[a_prob = 1] = 1/2 Pr[L >= z]
//   payload:  Pr[a = 1]      = E[Y_j(r) 1{L >= z}],  Y_j = (r_j - m_j) / (M_j - m_j)
//
// which are computed here in closed form over a scenario set. Estimators then
// see only a Bernoulli amplitude through AmplitudeOracle, which counts
// applications of the marking unitary.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "qcvar/errors.hpp"
#include "qcvar/random.hpp"
#include "qcvar/scenario_model.hpp"

namespace qcvar {

enum class QaeBackend {
  exact,  // noiseless: returns the true amplitude
  ideal,  // O(1/M) emulator
  mlae,   // Grover-power measurement statistics + maximum likelihood
};

/// How the ideal backend produces its M^2 effective samples inside the
/// gradient oracle.
enum class IdealEmulation {
  shared,       // one draw of M^2 scenarios per oracle call, shared by all circuits
  per_circuit,  // independent Binomial(M^2, a) per amplitude estimate
};

struct QaeConfig {
  QaeBackend backend = QaeBackend::ideal;
  IdealEmulation emulation = IdealEmulation::shared;
  std::uint64_t budget = 0;  // queries per estimate; 0 = derive from accuracy targets
  double eta_prime = 1.0 / 3.0;
  std::vector<unsigned> mlae_schedule = {0, 1, 2, 4, 8, 16};
  std::uint64_t shots_per_power = 100;
  double emulator_constant = 1.0;  // c in M = ceil(c / eps_target)

  void validate() const {
    detail::require(eta_prime > 0.0 && eta_prime < 1.0, "qae: eta_prime must lie in (0, 1)");
    detail::require(emulator_constant > 0.0, "qae: emulator constant must be positive");
    if (backend == QaeBackend::mlae) {
      detail::require(!mlae_schedule.empty(), "qae: MLAE schedule is empty");
      detail::require(shots_per_power >= 1, "qae: MLAE needs at least one shot per power");
    }
  }
};

/// Bernoulli amplitude with a cumulative query counter.
class AmplitudeOracle {
 public:
  explicit AmplitudeOracle(double amplitude) : amplitude_(amplitude) {
    detail::require(amplitude >= 0.0 && amplitude <= 1.0 && std::isfinite(amplitude),
                    "amplitude must lie in [0, 1]");
  }

  double true_amplitude() const { return amplitude_; }
  std::uint64_t queries() const { return queries_; }
  void charge(std::uint64_t n) { queries_ += n; }

 private:
  double amplitude_;
  std::uint64_t queries_ = 0;
};

/// Comparator flag 1{L > z} + tie_weight 1{L == z}. tie_weight = 1 is the
/// plain `L >= z` flag; fractional weights split a boundary atom.
struct TailMarking {
  double z = 0.0;
  double tie_weight = 1.0;

  double flag(double loss_value) const {
    if (loss_value > z) return 1.0;
    if (loss_value == z) return tie_weight;
    return 0.0;
  }
};

/// Scenario rows with probabilities and precomputed losses for one portfolio.
/// Both the exact amplitudes and the oracle's working samples use this.
class MarkedScenarios {
 public:
  MarkedScenarios(std::shared_ptr<const Matrix> returns, std::vector<double> probs, Vector lower, Vector upper,
                  const Vector& w)
      : returns_(std::move(returns)), probs_(std::move(probs)), lower_(std::move(lower)), upper_(std::move(upper)) {
    detail::require(returns_ != nullptr, "marked scenarios: null returns");
    detail::require(static_cast<std::size_t>(returns_->rows()) == probs_.size(), "marked scenarios: size mismatch");
    detail::require(returns_->cols() == w.size() && lower_.size() == w.size() && upper_.size() == w.size(),
                    "marked scenarios: dimension mismatch");
    for (Eigen::Index j = 0; j < lower_.size(); ++j)
      detail::require(lower_[j] < upper_[j], "marked scenarios: lower bound must be below upper bound");
    losses_ = portfolio_losses(*returns_, w);
  }

  MarkedScenarios(const ScenarioSet& s, const Vector& w) : MarkedScenarios(s.returns, s.probs, s.lower, s.upper, w) {}

  std::size_t size() const { return probs_.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(returns_->cols()); }
  const std::vector<double>& losses() const { return losses_; }
  const Vector& lower() const { return lower_; }
  const Vector& upper() const { return upper_; }

  double min_loss() const { return *std::min_element(losses_.begin(), losses_.end()); }
  double max_loss() const { return *std::max_element(losses_.begin(), losses_.end()); }

  /// 1/2 sum_i p_i flag(L_i).
  double tail_amplitude(const TailMarking& m) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < probs_.size(); ++i) acc += probs_[i] * m.flag(losses_[i]);
    return std::clamp(0.5 * acc, 0.0, 0.5);
  }

  /// sum_i p_i Y_j(r_i) flag(L_i).
  double payload_amplitude(const TailMarking& m, std::size_t j) const {
    detail::require(j < dim(), "payload amplitude: coordinate out of range");
    const auto jj = static_cast<Eigen::Index>(j);
    const double lo = lower_[jj];
    const double span = upper_[jj] - lo;
    double acc = 0.0;
    for (std::size_t i = 0; i < probs_.size(); ++i) {
      const double f = m.flag(losses_[i]);
      if (f == 0.0) continue;
      acc += probs_[i] * f * ((*returns_)(static_cast<Eigen::Index>(i), jj) - lo) / span;
    }
    return std::clamp(acc, 0.0, 1.0);
  }

 private:
  std::shared_ptr<const Matrix> returns_;
  std::vector<double> probs_;
  Vector lower_;
  Vector upper_;
  std::vector<double> losses_;
};

inline double exact_tail_amplitude(const ScenarioSet& scen, const Vector& w, const TailMarking& m) {
  return MarkedScenarios(scen, w).tail_amplitude(m);
}

inline double exact_tail_amplitude(const ScenarioSet& scen, const Vector& w, double z) {
  return exact_tail_amplitude(scen, w, TailMarking{z});
}

inline double exact_payload_amplitude(const ScenarioSet& scen, const Vector& w, const TailMarking& m,
                                      std::size_t j) {
  return MarkedScenarios(scen, w).payload_amplitude(m, j);
}

inline double exact_payload_amplitude(const ScenarioSet& scen, const Vector& w, double z, std::size_t j) {
  return exact_payload_amplitude(scen, w, TailMarking{z}, j);
}

/// sin^2((2k + 1) arcsin sqrt(a)).
inline double grover_outcome_probability(double a, unsigned k) {
  detail::require(a >= 0.0 && a <= 1.0, "grover: amplitude must lie in [0, 1]");
  const double theta = std::asin(std::sqrt(a));
  const double s = std::sin((2.0 * k + 1.0) * theta);
  return std::clamp(s * s, 0.0, 1.0);
}

/// Mean of M^2 Bernoulli(a) draws; standard error ~ sqrt(a (1 - a)) / M.
/// Charges M queries.
inline double ideal_qae_estimate(AmplitudeOracle& oracle, std::uint64_t budget, std::uint64_t seed) {
  detail::require(budget >= 1, "ideal QAE: budget must be >= 1");
  detail::require(budget <= (std::uint64_t{1} << 31), "ideal QAE: budget too large");
  oracle.charge(budget);
  const double a = oracle.true_amplitude();
  const std::uint64_t n = budget * budget;
  if (a <= 0.0) return 0.0;
  if (a >= 1.0) return 1.0;
  Rng rng = make_rng(seed, 0x1DEA1);
  std::binomial_distribution<std::uint64_t> binom(n, a);
  return std::clamp(static_cast<double>(binom(rng)) / static_cast<double>(n), 0.0, 1.0);
}

/// Queries consumed by one MLAE run: sum_k shots (2 m_k + 1).
inline std::uint64_t mlae_query_cost(const QaeConfig& cfg) {
  std::uint64_t total = 0;
  for (unsigned m : cfg.mlae_schedule) total += cfg.shots_per_power * (2ULL * m + 1ULL);
  return total;
}

namespace detail {

struct MlaeCounts {
  std::vector<unsigned> powers;
  std::vector<double> hits;
  std::vector<double> shots;

  double log_likelihood(double theta) const {
    constexpr double tiny = 1e-300;
    double ll = 0.0;
    for (std::size_t k = 0; k < powers.size(); ++k) {
      const double s = std::sin((2.0 * powers[k] + 1.0) * theta);
      const double p = std::clamp(s * s, 0.0, 1.0);
      if (hits[k] > 0.0) ll += hits[k] * std::log(std::max(p, tiny));
      if (shots[k] > hits[k]) ll += (shots[k] - hits[k]) * std::log(std::max(1.0 - p, tiny));
    }
    return ll;
  }
};

}  // namespace detail

/// Maximum-likelihood amplitude estimation over a Grover-power schedule.
/// The likelihood is maximized on a dense theta grid over [0, pi/2] and the
/// best cell is refined by golden-section search.
inline double mlae_estimate(AmplitudeOracle& oracle, const QaeConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  detail::require(cfg.backend == QaeBackend::mlae, "mlae_estimate: backend is not mlae");
  Rng rng = make_rng(seed, 0x31AE);
  detail::MlaeCounts counts;
  unsigned max_power = 0;
  for (unsigned m : cfg.mlae_schedule) {
    const double p = grover_outcome_probability(oracle.true_amplitude(), m);
    std::binomial_distribution<std::uint64_t> binom(cfg.shots_per_power, p);
    counts.powers.push_back(m);
    counts.hits.push_back(static_cast<double>(binom(rng)));
    counts.shots.push_back(static_cast<double>(cfg.shots_per_power));
    max_power = std::max(max_power, m);
  }
  oracle.charge(mlae_query_cost(cfg));

  constexpr double half_pi = std::numbers::pi / 2.0;
  const std::size_t grid = std::max<std::size_t>(2000, 64 * (2 * static_cast<std::size_t>(max_power) + 1));
  const double step = half_pi / static_cast<double>(grid);
  std::size_t best = 0;
  double best_ll = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i <= grid; ++i) {
    const double ll = counts.log_likelihood(static_cast<double>(i) * step);
    if (ll > best_ll) {
      best_ll = ll;
      best = i;
    }
  }

  double theta = static_cast<double>(best) * step;
  double lo = std::max(0.0, theta - step);
  double hi = std::min(half_pi, theta + step);
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = hi - inv_phi * (hi - lo);
  double x2 = lo + inv_phi * (hi - lo);
  double f1 = counts.log_likelihood(x1);
  double f2 = counts.log_likelihood(x2);
  for (int it = 0; it < 80; ++it) {
    if (f1 < f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + inv_phi * (hi - lo);
      f2 = counts.log_likelihood(x2);
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - inv_phi * (hi - lo);
      f1 = counts.log_likelihood(x1);
    }
  }
  const double refined = 0.5 * (lo + hi);
  if (counts.log_likelihood(refined) > best_ll) theta = refined;

  const double s = std::sin(theta);
  const double estimate = s * s;
  if (!std::isfinite(estimate)) throw EstimationFailure("mlae: non-finite likelihood maximizer");
  return std::clamp(estimate, 0.0, 1.0);
}

/// Median of an odd number of repetitions.
inline double amplify_confidence(std::vector<double> estimates) {
  detail::require(!estimates.empty(), "amplify_confidence: no estimates");
  detail::require(estimates.size() % 2 == 1, "amplify_confidence: repetition count must be odd");
  const auto mid = estimates.begin() + static_cast<std::ptrdiff_t>(estimates.size() / 2);
  std::nth_element(estimates.begin(), mid, estimates.end());
  return *mid;
}

/// One amplitude estimate with the configured backend; charges the oracle.
inline double estimate_amplitude(AmplitudeOracle& oracle, const QaeConfig& cfg, std::uint64_t budget,
                                 std::uint64_t seed) {
  switch (cfg.backend) {
    case QaeBackend::exact:
      oracle.charge(budget);
      return oracle.true_amplitude();
    case QaeBackend::ideal:
      return ideal_qae_estimate(oracle, budget, seed);
    case QaeBackend::mlae:
      return mlae_estimate(oracle, cfg, seed);
  }
  throw InvalidParameter("unknown QAE backend");
}

}  // namespace qcvar
