#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "qcvar/risk_core.hpp"

using namespace qcvar;

namespace {

EmpiricalLossDistribution losses_only(std::vector<double> l) {
  std::vector<double> p(l.size(), 1.0 / static_cast<double>(l.size()));
  return {std::move(l), std::move(p)};
}

// Test-side oracle: minimum of z + E[(L - z)+]/(1 - a) over support points.
double brute_force_cvar(const std::vector<double>& L, const std::vector<double>& p, double a) {
  double best = 1e300;
  for (double z : L) {
    double e = 0;
    for (std::size_t i = 0; i < L.size(); ++i) e += p[i] * std::max(L[i] - z, 0.0);
    best = std::min(best, z + e / (1 - a));
  }
  return best;
}

// Test-side oracle for the split-atom tail gradient.
Vector brute_force_gradient(const Matrix& R, const std::vector<double>& p, const Vector& w, double a) {
  const auto n = static_cast<std::size_t>(R.rows());
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<double> L(n);
  for (std::size_t i = 0; i < n; ++i) L[i] = -R.row(static_cast<Eigen::Index>(i)).dot(w);
  std::sort(idx.begin(), idx.end(), [&](auto x, auto y) { return L[x] > L[y]; });
  double need = 1 - a;
  Vector g = Vector::Zero(R.cols());
  for (std::size_t k = 0; k < n && need > 1e-15; ++k) {
    const double take = std::min(need, p[idx[k]]);
    g -= take * R.row(static_cast<Eigen::Index>(idx[k])).transpose();
    need -= take;
  }
  return g / (1 - a);
}

ScenarioSet random_set(std::size_t n, std::size_t d, unsigned seed, bool uniform = false) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0, 0.2);
  std::uniform_real_distribution<double> ud(0.1, 1.0);
  Matrix R(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < R.rows(); ++i)
    for (Eigen::Index j = 0; j < R.cols(); ++j) R(i, j) = std::clamp(nd(rng), -1.0, 1.0);
  std::vector<double> p(n);
  for (auto& x : p) x = uniform ? 1.0 : ud(rng);
  normalize_probs(p);
  ScenarioSet s;
  s.returns = std::make_shared<const Matrix>(std::move(R));
  s.probs = std::move(p);
  s.lower = Vector::Constant(static_cast<Eigen::Index>(d), -1.0);
  s.upper = Vector::Constant(static_cast<Eigen::Index>(d), 1.0);
  s.n_qubits = register_qubits(n);
  return s;
}

}  // namespace

TEST(VarExact, EmpiricalQuantile) {
  EXPECT_DOUBLE_EQ(var_exact(losses_only({3, 1, 4, 2}), 0.5), 2.0);
  EXPECT_DOUBLE_EQ(var_exact(losses_only({3, 1, 4, 2}), 1e-9), 1.0);
  EXPECT_DOUBLE_EQ(var_exact(losses_only({3, 1, 4, 2}), 0.75), 3.0);
  EXPECT_THROW(var_exact(losses_only({}), 0.5), InvalidParameter);
  EXPECT_THROW(var_exact(losses_only({1, 2}), 1.0), InvalidParameter);
}

TEST(CvarExact, SingleTailAtom) { EXPECT_DOUBLE_EQ(cvar_exact(losses_only({1, 2, 3, 4}), 0.75), 4.0); }

TEST(CvarExact, SplitsBoundaryAtom) {
  // alpha = 0.6: tail mass 0.4 = all of atom 4 (0.25) + 0.15 of atom 3.
  EXPECT_NEAR(cvar_exact(losses_only({1, 2, 3, 4}), 0.6), (0.25 * 4 + 0.15 * 3) / 0.4, 1e-15);
}

TEST(StandardNormal, DenseGridQuantileAndShortfall) {
  Vector mean(1), vol(1);
  mean << 0;
  vol << 1;
  const ScenarioSet s = discretize(make_return_model(mean, vol, 0.0), 100'001);
  const auto dist = make_loss_distribution(s, Vector::Ones(1));
  EXPECT_NEAR(var_exact(dist, 0.95), 1.6449, 0.002);
  EXPECT_NEAR(cvar_exact(dist, 0.95), 2.0627, 0.005);
}

TEST(CvarExact, MatchesRockafellarUryasevBruteForce) {
  for (unsigned seed = 0; seed < 20; ++seed) {
    const ScenarioSet s = random_set(200, 3, seed);
    const Vector w = Vector::Constant(3, 1.0 / 3);
    const auto dist = make_loss_distribution(s, w);
    std::vector<double> L = portfolio_losses(*s.returns, w);
    for (double a : {0.5, 0.9, 0.95, 0.99}) {
      EXPECT_NEAR(cvar_exact(dist, a), brute_force_cvar(L, s.probs, a), 1e-12) << "seed " << seed << " a " << a;
      EXPECT_GE(cvar_exact(dist, a), var_exact(dist, a));
      EXPECT_NEAR(ru_objective(dist, a, var_exact(dist, a)), cvar_exact(dist, a), 1e-9);
    }
  }
}

TEST(RuObjective, LargeThresholdLimit) {
  const auto dist = losses_only({1, 2, 3, 4});
  EXPECT_DOUBLE_EQ(ru_objective(dist, 0.9, 100.0), 100.0);
}

TEST(RuObjective, GridScanMinimumEqualsCvar) {
  const ScenarioSet s = random_set(500, 2, 11, true);
  const auto dist = make_loss_distribution(s, Vector::Constant(2, 0.5));
  const double lo = dist.losses().front(), hi = dist.losses().back();
  const std::size_t n = 20'000;
  double best = 1e300;
  for (std::size_t k = 0; k <= n; ++k) best = std::min(best, ru_objective(dist, 0.95, lo + (hi - lo) * k / n));
  const double c = cvar_exact(dist, 0.95);
  EXPECT_GE(best, c - 1e-12);
  // RU is 1/(1-alpha)-Lipschitz in z, so the grid minimum is within slope * spacing.
  EXPECT_LE(best - c, (hi - lo) / n / 0.05);
}

TEST(SubgradientExact, SingleScenarioTail) {
  auto R = std::make_shared<Matrix>(4, 2);
  *R << 0.0, 0.0, 0.1, 0.1, 0.05, -0.05, 0.2, -0.1;
  // w = [0, 1]: losses 0, -0.1, 0.05, 0.1 -> top atom is the last row.
  EmpiricalLossDistribution dist(R, std::vector<double>(4, 0.25), (Vector(2) << 0, 1).finished());
  const Vector g = subgradient_exact(dist, 0.75);
  EXPECT_DOUBLE_EQ(g[0], -0.2);
  EXPECT_DOUBLE_EQ(g[1], 0.1);
}

TEST(SubgradientExact, SymmetricModelHasEqualCoordinates) {
  Vector mean = Vector::Zero(2), vol = Vector::Constant(2, 0.2);
  const ScenarioSet s = discretize(make_return_model(mean, vol, 0.3), 65);
  const Vector g = subgradient_exact(make_loss_distribution(s, Vector::Constant(2, 0.5)), 0.95);
  EXPECT_NEAR(g[0], g[1], 1e-12);
}

TEST(SubgradientExact, MatchesBruteForceOnRandomSets) {
  for (unsigned seed = 0; seed < 20; ++seed) {
    const ScenarioSet s = random_set(300, 4, 100 + seed);
    Vector w(4);
    w << 0.1, 0.2, 0.3, 0.4;
    const Vector g = subgradient_exact(make_loss_distribution(s, w), 0.9);
    EXPECT_LT((g - brute_force_gradient(*s.returns, s.probs, w, 0.9)).norm(), 1e-12);
  }
}

TEST(SubgradientExact, GridModelMatchesLargeSampleTailAverage) {
  const ReturnModel m = default_model(3);
  const Vector w = Vector::Constant(3, 1.0 / 3);
  const Vector g = subgradient_exact(make_loss_distribution(discretize(m, 64), w), 0.95);

  const Matrix R = sample_returns(m, 500'000, 2024);
  std::vector<double> L(static_cast<std::size_t>(R.rows()));
  for (Eigen::Index i = 0; i < R.rows(); ++i) L[static_cast<std::size_t>(i)] = -R.row(i).dot(w);
  std::vector<double> sorted = L;
  const std::size_t k = static_cast<std::size_t>(0.95 * static_cast<double>(L.size()));
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k), sorted.end());
  const double z = sorted[k];
  Vector sum = Vector::Zero(3), sq = Vector::Zero(3);
  double n = 0;
  for (Eigen::Index i = 0; i < R.rows(); ++i)
    if (L[static_cast<std::size_t>(i)] >= z) {
      const Vector gi = -R.row(i).transpose();
      sum += gi;
      sq += gi.cwiseProduct(gi);
      n += 1;
    }
  const Vector mc = sum / n;
  for (Eigen::Index j = 0; j < 3; ++j) {
    const double se = std::sqrt((sq[j] / n - mc[j] * mc[j]) / n);
    EXPECT_NEAR(g[j], mc[j], 3 * se) << "coordinate " << j;
  }
}

TEST(SubgradientExact, RequiresGradients) {
  EXPECT_THROW(subgradient_exact(losses_only({1, 2}), 0.5), InvalidParameter);
}

TEST(Properties, CvarNondecreasingInAlpha) {
  const ScenarioSet s = random_set(400, 3, 5);
  const auto dist = make_loss_distribution(s, Vector::Constant(3, 1.0 / 3));
  double prev = -1e300;
  for (double a = 0.05; a < 0.999; a += 0.01) {
    const double c = cvar_exact(dist, a);
    EXPECT_GE(c, prev - 1e-12) << "alpha " << a;
    prev = c;
  }
}

TEST(Properties, TranslationShiftsRiskAndKeepsTail) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> nd;
  std::vector<double> L(257);
  for (auto& x : L) x = nd(rng);
  std::vector<double> shifted = L;
  for (auto& x : shifted) x += 0.75;
  const auto a = losses_only(L), b = losses_only(shifted);
  EXPECT_NEAR(var_exact(b, 0.9), var_exact(a, 0.9) + 0.75, 1e-12);
  EXPECT_NEAR(cvar_exact(b, 0.9), cvar_exact(a, 0.9) + 0.75, 1e-12);
  const TailSplit ta = tail_split(a, 0.9), tb = tail_split(b, 0.9);
  EXPECT_EQ(ta.first, tb.first);
  EXPECT_EQ(ta.above, tb.above);
  EXPECT_EQ(a.order(), b.order());
  EXPECT_NEAR(ta.boundary_weight, tb.boundary_weight, 1e-12);
}

TEST(Properties, ConvexInWeights) {
  const ScenarioSet s = random_set(500, 3, 21);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 50; ++trial) {
    Vector w1(3), w2(3);
    for (int j = 0; j < 3; ++j) w1[j] = u(rng), w2[j] = u(rng);
    w1 /= w1.sum();
    w2 /= w2.sum();
    const double lam = u(rng);
    const double lhs = cvar_exact(make_loss_distribution(s, lam * w1 + (1 - lam) * w2), 0.95);
    const double rhs = lam * cvar_exact(make_loss_distribution(s, w1), 0.95) +
                       (1 - lam) * cvar_exact(make_loss_distribution(s, w2), 0.95);
    EXPECT_LE(lhs, rhs + 1e-9);
  }
}

TEST(Regularity, BoundsArePositiveAndDominateSample) {
  const ScenarioSet s = random_set(2000, 2, 8, true);
  const auto dist = make_loss_distribution(s, Vector::Constant(2, 0.5));
  const RegularityBounds b = measure_regularity(dist);
  EXPECT_GT(b.grad_bound, 0);
  EXPECT_GT(b.density_bound, 0);
  for (Eigen::Index i = 0; i < s.returns->rows(); ++i) EXPECT_LE(s.returns->row(i).norm(), b.grad_bound);
}
