#pragma once

// Return distributions: a correlated-Gaussian model for sampling and a finite
// scenario set {(r_i, p_i)} that serves as ground truth for exact amplitudes.

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "qcvar/errors.hpp"
#include "qcvar/random.hpp"

namespace qcvar {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Sigma_jk = vols_j vols_k (rho + (1 - rho) [j == k]).
inline Matrix build_equicorrelation_covariance(std::size_t d, double rho, const Vector& vols) {
  detail::require(d >= 1, "covariance: asset count must be >= 1");
  detail::require(static_cast<std::size_t>(vols.size()) == d, "covariance: vols size != d");
  detail::require(rho >= 0.0 && rho < 1.0, "covariance: rho must lie in [0, 1)");
  for (Eigen::Index j = 0; j < vols.size(); ++j)
    detail::require(vols[j] > 0.0 && std::isfinite(vols[j]), "covariance: vols must be positive");
  Matrix cov(d, d);
  for (std::size_t j = 0; j < d; ++j)
    for (std::size_t k = 0; k < d; ++k)
      cov(j, k) = vols[j] * vols[k] * (j == k ? 1.0 : rho);
  return cov;
}

struct ReturnModel {
  Vector mean;
  Vector vols;
  double rho = 0.0;
  Vector lower;  // m_j
  Vector upper;  // M_j

  std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }

  Matrix covariance() const { return build_equicorrelation_covariance(dim(), rho, vols); }

  void validate() const {
    const auto d = mean.size();
    detail::require(d >= 1, "model: empty mean");
    detail::require(vols.size() == d && lower.size() == d && upper.size() == d,
                    "model: mean/vols/bounds size mismatch");
    detail::require(rho >= 0.0 && rho < 1.0, "model: rho must lie in [0, 1)");
    for (Eigen::Index j = 0; j < d; ++j) {
      detail::require(vols[j] > 0.0, "model: vols must be positive");
      detail::require(lower[j] < upper[j], "model: lower bound must be below upper bound");
    }
  }
};

/// Bounds default to mean +- 5 vol.
inline ReturnModel make_return_model(Vector mean, Vector vols, double rho,
                                     std::optional<std::pair<Vector, Vector>> bounds = std::nullopt) {
  ReturnModel m;
  m.mean = std::move(mean);
  m.vols = std::move(vols);
  m.rho = rho;
  if (bounds) {
    m.lower = bounds->first;
    m.upper = bounds->second;
  } else if (m.mean.size() == m.vols.size()) {
    m.lower = m.mean - 5.0 * m.vols;
    m.upper = m.mean + 5.0 * m.vols;
  }
  m.validate();
  return m;
}

inline Vector linspace(double lo, double hi, std::size_t n) {
  Vector v(n);
  for (std::size_t i = 0; i < n; ++i)
    v[i] = n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return v;
}

/// Reproduction default: zero mean, rho = 0.3, vols evenly spaced in [0.1, 0.3].
inline ReturnModel default_model(std::size_t d = 10) {
  return make_return_model(Vector::Zero(d), linspace(0.1, 0.3, d), 0.3);
}

/// Row-wise dot product in a fixed summation order; every module computes
/// losses through this so thresholds compare bit-exactly.
inline double dot_fixed(const Eigen::Ref<const Vector>& w, const Matrix& rows, Eigen::Index i) {
  double s = 0.0;
  for (Eigen::Index j = 0; j < w.size(); ++j) s += w[j] * rows(i, j);
  return s;
}

/// L(w, r) = -<w, r>.
inline double loss(const Vector& w, const Vector& r) {
  detail::require(w.size() == r.size(), "loss: dimension mismatch");
  double s = 0.0;
  for (Eigen::Index j = 0; j < w.size(); ++j) s += w[j] * r[j];
  return -s;
}

/// Losses of every row of `returns` for portfolio `w`.
inline std::vector<double> portfolio_losses(const Matrix& returns, const Vector& w) {
  detail::require(returns.cols() == w.size(), "portfolio_losses: dimension mismatch");
  std::vector<double> out(static_cast<std::size_t>(returns.rows()));
  for (Eigen::Index i = 0; i < returns.rows(); ++i) out[static_cast<std::size_t>(i)] = -dot_fixed(w, returns, i);
  return out;
}

/// N x d matrix of i.i.d. N(mean, Sigma) draws via the Cholesky factor,
/// clamped coordinate-wise into the model bounds.
inline Matrix sample_returns(const ReturnModel& model, std::size_t n, std::uint64_t seed) {
  model.validate();
  detail::require(n >= 1, "sample_returns: N must be >= 1");
  const auto d = static_cast<Eigen::Index>(model.dim());
  const Eigen::LLT<Matrix> llt(model.covariance());
  if (llt.info() != Eigen::Success) throw InvalidParameter("sample_returns: covariance not positive definite");
  const Matrix chol = llt.matrixL();

  Rng rng = make_rng(seed, 0x5A3D1E);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix out(static_cast<Eigen::Index>(n), d);
  Vector z(d);
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    for (Eigen::Index j = 0; j < d; ++j) z[j] = normal(rng);
    for (Eigen::Index j = 0; j < d; ++j) {
      double r = model.mean[j];
      for (Eigen::Index k = 0; k <= j; ++k) r += chol(j, k) * z[k];
      out(i, j) = std::clamp(r, model.lower[j], model.upper[j]);
    }
  }
  return out;
}

/// Finite distribution over return vectors. Rows of `returns` are scenarios.
struct ScenarioSet {
  std::shared_ptr<const Matrix> returns;
  std::vector<double> probs;
  Vector lower;
  Vector upper;
  std::size_t n_qubits = 0;

  std::size_t size() const { return probs.size(); }
  std::size_t dim() const { return returns ? static_cast<std::size_t>(returns->cols()) : 0; }

  void validate() const {
    detail::require(returns != nullptr && returns->rows() >= 1, "scenario set: empty");
    detail::require(static_cast<std::size_t>(returns->rows()) == probs.size(), "scenario set: probs size mismatch");
    detail::require(lower.size() == returns->cols() && upper.size() == returns->cols(),
                    "scenario set: bounds size mismatch");
    long double total = 0.0L;
    for (double p : probs) {
      detail::require(p >= 0.0 && std::isfinite(p), "scenario set: negative probability");
      total += p;
    }
    detail::require(std::abs(total - 1.0L) <= 1e-12L, "scenario set: probabilities do not sum to 1");
    for (Eigen::Index j = 0; j < lower.size(); ++j)
      detail::require(lower[j] < upper[j], "scenario set: lower bound must be below upper bound");
    for (Eigen::Index i = 0; i < returns->rows(); ++i)
      for (Eigen::Index j = 0; j < returns->cols(); ++j)
        detail::require((*returns)(i, j) >= lower[j] && (*returns)(i, j) <= upper[j],
                        "scenario set: scenario outside bounds");
    detail::require(size() <= (std::size_t{1} << n_qubits), "scenario set: register too small");
  }
};

inline std::size_t register_qubits(std::size_t n) {
  std::size_t q = 0;
  while ((std::size_t{1} << q) < n) ++q;
  return q;
}

/// Renormalizes `probs` with a compensated sum so the total is 1 to ~1 ulp.
inline void normalize_probs(std::vector<double>& probs) {
  long double total = 0.0L;
  for (double p : probs) total += p;
  for (double& p : probs) p = static_cast<double>(p / total);
}

/// Equally weighted scenario set built from sample rows (clamped to bounds).
inline ScenarioSet scenarios_from_samples(Matrix samples, const Vector& lower, const Vector& upper) {
  detail::require(samples.rows() >= 1, "scenarios_from_samples: no samples");
  for (Eigen::Index i = 0; i < samples.rows(); ++i)
    for (Eigen::Index j = 0; j < samples.cols(); ++j)
      samples(i, j) = std::clamp(samples(i, j), lower[j], upper[j]);
  ScenarioSet s;
  const auto n = static_cast<std::size_t>(samples.rows());
  s.probs.assign(n, 1.0 / static_cast<double>(n));
  s.returns = std::make_shared<const Matrix>(std::move(samples));
  s.lower = lower;
  s.upper = upper;
  s.n_qubits = register_qubits(n);
  return s;
}

inline ScenarioSet scenarios_from_samples(const ReturnModel& model, std::size_t n, std::uint64_t seed) {
  return scenarios_from_samples(sample_returns(model, n, seed), model.lower, model.upper);
}

/// Default cap on tensor-grid atoms (2^22).
inline constexpr std::size_t kMaxGridAtoms = std::size_t{1} << 22;

/// Tensor-product grid over [m_j, M_j] with weights proportional to the
/// Gaussian density at each node (not cell integrals), renormalized.
inline ScenarioSet discretize(const ReturnModel& model, std::size_t points_per_asset,
                              std::size_t max_atoms = kMaxGridAtoms) {
  model.validate();
  detail::require(points_per_asset >= 2, "discretize: need at least 2 points per asset");
  const std::size_t d = model.dim();
  std::size_t atoms = 1;
  for (std::size_t j = 0; j < d; ++j) {
    if (atoms > max_atoms / points_per_asset)
      throw ResourceLimit("discretize: grid of " + std::to_string(points_per_asset) + "^" + std::to_string(d) +
                          " atoms exceeds cap " + std::to_string(max_atoms));
    atoms *= points_per_asset;
  }

  const Eigen::LLT<Matrix> llt(model.covariance());
  Matrix grid(static_cast<Eigen::Index>(atoms), static_cast<Eigen::Index>(d));
  std::vector<double> log_density(atoms);
  std::vector<std::size_t> idx(d, 0);
  Vector x(d);
  for (std::size_t a = 0; a < atoms; ++a) {
    for (std::size_t j = 0; j < d; ++j) {
      const double t = static_cast<double>(idx[j]) / static_cast<double>(points_per_asset - 1);
      const double r = model.lower[j] + t * (model.upper[j] - model.lower[j]);
      grid(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(j)) = r;
      x[j] = r - model.mean[j];
    }
    const Vector y = llt.matrixL().solve(x);
    log_density[a] = -0.5 * y.squaredNorm();
    for (std::size_t j = d; j-- > 0;) {  // odometer, last asset fastest
      if (++idx[j] < points_per_asset) break;
      idx[j] = 0;
    }
  }
  const double peak = *std::max_element(log_density.begin(), log_density.end());
  std::vector<double> probs(atoms);
  for (std::size_t a = 0; a < atoms; ++a) probs[a] = std::exp(log_density[a] - peak);
  normalize_probs(probs);

  ScenarioSet s;
  s.returns = std::make_shared<const Matrix>(std::move(grid));
  s.probs = std::move(probs);
  s.lower = model.lower;
  s.upper = model.upper;
  s.n_qubits = register_qubits(atoms);
  return s;
}

}  // namespace qcvar
