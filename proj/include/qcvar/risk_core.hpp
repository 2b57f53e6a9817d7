#pragma once

// Exact VaR / CVaR / Rockafellar-Uryasev objective and the tail-conditional
// subgradient over a finite weighted loss distribution.
//
// The empirical distribution has atoms, so {L >= VaR} can carry more than
// 1 - alpha of the mass. Following the expected-shortfall convention the VaR
// atom enters the tail with the fractional weight that makes the tail mass
// exactly 1 - alpha; with that split CVaR equals the RU objective at its
// minimizer and the subgradient is an element of the CVaR subdifferential.

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <vector>

#include "qcvar/errors.hpp"
#include "qcvar/scenario_model.hpp"

namespace qcvar {

/// Regularity constants: G bounds ||grad_w L|| a.s., density_bound bounds
/// the density of L.
struct RegularityBounds {
  double grad_bound = 0.0;
  double density_bound = 0.0;
};

class EmpiricalLossDistribution {
 public:
  EmpiricalLossDistribution() = default;

  /// Losses -returns * w, sorted ascending (stable, so ties keep scenario order).
  EmpiricalLossDistribution(std::shared_ptr<const Matrix> returns, std::vector<double> weights, const Vector& w)
      : returns_(std::move(returns)) {
    detail::require(returns_ != nullptr, "loss distribution: null returns");
    detail::require(static_cast<std::size_t>(returns_->rows()) == weights.size(),
                    "loss distribution: weights size mismatch");
    init(portfolio_losses(*returns_, w), std::move(weights));
  }

  /// Loss-only distribution (no gradients); used for quantile arithmetic.
  EmpiricalLossDistribution(std::vector<double> losses, std::vector<double> weights) {
    detail::require(losses.size() == weights.size(), "loss distribution: weights size mismatch");
    init(std::move(losses), std::move(weights));
  }

  std::size_t size() const { return losses_.size(); }
  bool empty() const { return losses_.empty(); }
  bool has_gradients() const { return returns_ != nullptr; }
  std::size_t dim() const { return returns_ ? static_cast<std::size_t>(returns_->cols()) : 0; }

  const std::vector<double>& losses() const { return losses_; }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<std::size_t>& order() const { return order_; }

  /// grad_w L of the i-th sorted atom, i.e. -r.
  Vector gradient(std::size_t i) const {
    detail::require(has_gradients(), "loss distribution: no gradients attached");
    return -returns_->row(static_cast<Eigen::Index>(order_[i])).transpose();
  }

  const Matrix& returns() const { return *returns_; }

 private:
  void init(std::vector<double> losses, std::vector<double> weights) {
    long double total = 0.0L;
    for (double p : weights) {
      detail::require(p >= 0.0 && std::isfinite(p), "loss distribution: invalid weight");
      total += p;
    }
    detail::require(losses.empty() || std::abs(total - 1.0L) <= 1e-12L, "loss distribution: weights must sum to 1");
    order_.resize(losses.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::stable_sort(order_.begin(), order_.end(),
                     [&](std::size_t a, std::size_t b) { return losses[a] < losses[b]; });
    losses_.resize(losses.size());
    weights_.resize(losses.size());
    for (std::size_t i = 0; i < order_.size(); ++i) {
      losses_[i] = losses[order_[i]];
      weights_[i] = weights[order_[i]];
    }
  }

  std::vector<double> losses_;
  std::vector<double> weights_;
  std::vector<std::size_t> order_;
  std::shared_ptr<const Matrix> returns_;
};

inline EmpiricalLossDistribution make_loss_distribution(const ScenarioSet& s, const Vector& w) {
  detail::require(static_cast<std::size_t>(w.size()) == s.dim(), "loss distribution: weight/scenario dim mismatch");
  return {s.returns, s.probs, w};
}

/// Equally weighted distribution over the rows of `returns`.
inline EmpiricalLossDistribution make_uniform_loss_distribution(std::shared_ptr<const Matrix> returns,
                                                                const Vector& w) {
  detail::require(returns != nullptr && returns->rows() >= 1, "loss distribution: no samples");
  detail::require(returns->cols() == w.size(), "loss distribution: weight/sample dim mismatch");
  const auto n = static_cast<std::size_t>(returns->rows());
  return {std::move(returns), std::vector<double>(n, 1.0 / static_cast<double>(n)), w};
}

/// Tail description: atoms [first, size) with atom `first` (and any ties at
/// the same loss) scaled by `boundary_weight`.
struct TailSplit {
  double var = 0.0;
  std::size_t first = 0;     // first sorted index with loss == var
  std::size_t above = 0;     // first sorted index with loss > var
  double boundary_weight = 1.0;
  double mass = 0.0;         // total tail mass, 1 - alpha up to rounding

  double weight(const EmpiricalLossDistribution& dist, std::size_t i) const {
    return i < above ? boundary_weight * dist.weights()[i] : dist.weights()[i];
  }
};

namespace detail {

inline void check_alpha(double alpha) {
  require(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
}

// Relative slack on cumulative-weight comparisons so that e.g. 95 atoms of
// weight 1/100 count as reaching alpha = 0.95.
inline constexpr double kCumulativeSlack = 1e-12;

}  // namespace detail

inline TailSplit tail_split(const EmpiricalLossDistribution& dist, double alpha) {
  detail::check_alpha(alpha);
  detail::require(!dist.empty(), "empty loss distribution");
  const auto& L = dist.losses();
  const auto& p = dist.weights();
  const std::size_t n = L.size();

  double cum = 0.0;
  std::size_t k = n - 1;
  for (std::size_t i = 0; i < n; ++i) {
    cum += p[i];
    if (cum >= alpha - detail::kCumulativeSlack) {
      k = i;
      break;
    }
  }
  TailSplit t;
  t.var = L[k];
  t.first = k;
  while (t.first > 0 && L[t.first - 1] == t.var) --t.first;
  t.above = k;
  while (t.above < n && L[t.above] == t.var) ++t.above;

  double above_mass = 0.0;
  for (std::size_t i = n; i-- > t.above;) above_mass += p[i];
  double at_mass = 0.0;
  for (std::size_t i = t.first; i < t.above; ++i) at_mass += p[i];

  const double target = 1.0 - alpha;
  t.boundary_weight = at_mass > 0.0 ? std::clamp((target - above_mass) / at_mass, 0.0, 1.0) : 0.0;
  t.mass = above_mass + t.boundary_weight * at_mass;
  if (!(t.mass > 0.0)) throw DegenerateTail("tail event carries no probability mass");
  return t;
}

/// Left-continuous quantile: smallest support point with cumulative weight >= alpha.
inline double var_exact(const EmpiricalLossDistribution& dist, double alpha) { return tail_split(dist, alpha).var; }

/// Mean loss over the split tail of mass 1 - alpha.
inline double cvar_exact(const EmpiricalLossDistribution& dist, double alpha) {
  const TailSplit t = tail_split(dist, alpha);
  const auto& L = dist.losses();
  double acc = 0.0;
  for (std::size_t i = dist.size(); i-- > t.first;) acc += t.weight(dist, i) * L[i];
  return acc / t.mass;
}

/// z + E[(L - z)_+] / (1 - alpha).
inline double ru_objective(const EmpiricalLossDistribution& dist, double alpha, double z) {
  detail::check_alpha(alpha);
  const auto& L = dist.losses();
  const auto& p = dist.weights();
  double excess = 0.0;
  for (std::size_t i = L.size(); i-- > 0;) {
    if (L[i] <= z) break;
    excess += p[i] * (L[i] - z);
  }
  return z + excess / (1.0 - alpha);
}

/// E[grad_w L | tail] with the same fractional boundary atom as cvar_exact.
inline Vector subgradient_exact(const EmpiricalLossDistribution& dist, double alpha) {
  detail::require(dist.has_gradients(), "subgradient_exact: distribution has no gradients");
  const TailSplit t = tail_split(dist, alpha);
  const Matrix& R = dist.returns();
  Vector g = Vector::Zero(static_cast<Eigen::Index>(dist.dim()));
  for (std::size_t i = dist.size(); i-- > t.first;) {
    const double wt = t.weight(dist, i);
    if (wt == 0.0) continue;
    g -= wt * R.row(static_cast<Eigen::Index>(dist.order()[i])).transpose();
  }
  return g / t.mass;
}

/// G = max ||r_i||; density bound from a histogram of the losses.
inline RegularityBounds measure_regularity(const EmpiricalLossDistribution& dist, std::size_t bins = 0) {
  detail::require(dist.has_gradients() && dist.size() >= 2, "measure_regularity: need gradients and >= 2 atoms");
  RegularityBounds b;
  const Matrix& R = dist.returns();
  for (Eigen::Index i = 0; i < R.rows(); ++i) b.grad_bound = std::max(b.grad_bound, R.row(i).norm());

  if (bins == 0) bins = std::max<std::size_t>(10, static_cast<std::size_t>(std::sqrt(static_cast<double>(dist.size()))));
  const double lo = dist.losses().front();
  const double hi = dist.losses().back();
  detail::require(hi > lo, "measure_regularity: degenerate loss range");
  const double width = (hi - lo) / static_cast<double>(bins);
  std::vector<double> mass(bins, 0.0);
  for (std::size_t i = 0; i < dist.size(); ++i) {
    auto k = static_cast<std::size_t>((dist.losses()[i] - lo) / width);
    mass[std::min(k, bins - 1)] += dist.weights()[i];
  }
  b.density_bound = *std::max_element(mass.begin(), mass.end()) / width;
  return b;
}

}  // namespace qcvar
